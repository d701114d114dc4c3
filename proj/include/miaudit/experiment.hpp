#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "miaudit/attacks.hpp"
#include "miaudit/config.hpp"
#include "miaudit/dataset.hpp"
#include "miaudit/model.hpp"
#include "miaudit/rates.hpp"
#include "miaudit/signals.hpp"
#include "miaudit/vulnerability.hpp"

namespace miaudit {

// Failures while executing a run or reading one back, as opposed to
// configuration mistakes. The CLI maps these to exit code 2.
struct StageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Accuracy bookkeeping for one trained victim model.
struct ModelStats {
  int repetition = 0;
  int split_id = 0;
  std::string role;
  double train_acc = 0.0;
  double test_acc = 0.0;
};

// Everything produced within one corpus split of one repetition. Signal sets
// hold the train block first, then the test block, ids ascending inside each
// block. The relabelled sets come from the relabelled shadow model; on the
// shadow side they carry the relabelled labels, on the target side the true
// ones.
struct SplitOutcome {
  SplitPlan plan;
  TrainedModel target_model;
  TrainedModel shadow_model;
  TrainedModel relab_model;
  std::vector<ModelStats> stats;
  // Gap baseline first, then the enabled registry ids ascending; records
  // sorted by point id within each attack.
  std::vector<InferenceRecord> records;
  std::vector<SignalVector> sig_target_direct;
  std::vector<SignalVector> sig_target_relab;
  std::vector<SignalVector> sig_shadow_direct;
  std::vector<SignalVector> sig_shadow_relab;
};

// One full pipeline pass under one repetition master seed.
struct RepetitionOutcome {
  int repetition = 0;
  std::uint64_t master = 0;
  std::vector<SplitOutcome> splits;
  MembershipLedger ledger;
  std::vector<PointRates> point_rates;
  std::vector<AttackRates> attack_rates;
  std::vector<VulnerableSet> vulnerable;  // method order, see vulnerable_method_order()
};

struct RunResult {
  RunConfig config;
  Corpus corpus;    // audited points, ids 0..corpus.size()-1
  Corpus extended;  // audited points plus the reference pool appended after them
  std::vector<RepetitionOutcome> repetitions;
};

// amer_topk, anmer_topk, neighbors, knn_shapley, privacy_risk,
// outlier_baseline. File names and the overlap matrix follow this order.
const std::vector<std::string>& vulnerable_method_order();

// MIAUDIT_WORKERS when set (must be a positive integer), otherwise the
// hardware thread count.
int resolve_worker_count();

// Builds the audited corpus and the extended corpus that appends the
// reference pool. Synthetic sources generate both from dataset.seed; file
// sources split the rows at dataset.corpus_limit. Throws ConfigError when the
// data cannot support the configured run.
void materialize_corpus(const RunConfig& config, Corpus& corpus, Corpus& extended);

RepetitionOutcome run_repetition(const RunConfig& config, const Corpus& corpus,
                                 const Corpus& extended, int repetition, int workers);

RunResult run_experiment(const RunConfig& config, int workers);

// Writes the whole artifact tree under config.output.dir; the manifest goes
// last so its presence marks a finished run.
void write_run_artifacts(const RunResult& result);

// validate + run + persist. Drops an INCOMPLETE marker into the output
// directory for the duration of the run.
RunResult execute_run(const RunConfig& config, int workers);

// Recomputes the derived rate and summary files of a finished run from its
// raw artifacts, byte for byte.
void emit_report(const std::string& run_dir);

// Overlap matrix across the vulnerable sets of several finished runs over
// the same corpus and k. Returns csv; row labels are run<i>.<method>.r<rep>.
std::string compare_runs(const std::vector<std::string>& run_dirs);

}  // namespace miaudit
