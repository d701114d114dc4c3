#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "miaudit/dataset.hpp"
#include "miaudit/model.hpp"

namespace miaudit {

// Configuration mistakes (unknown keys, bad ranges, unusable combinations).
// The CLI maps these to exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DatasetConfig {
  std::string source = "synthetic";  // synthetic | file
  // synthetic source
  int n_points = 4000;
  int n_classes = 10;
  int dim = 32;
  double cluster_spread = 0.15;
  double label_noise = 0.3;
  int reference_pool = 4000;  // extra same-distribution points for the neighbor method
  // file source
  std::string path;
  int label_column = -1;  // -1 = last column
  int corpus_limit = 0;   // rows that form the corpus; the rest become the reference pool
  // The corpus has its own seed so reruns with a fresh master seed audit the
  // same data.
  std::uint64_t seed = 1;
};

struct AttacksConfig {
  bool include_gap = false;   // count the gap baseline in the per-point rates
  std::vector<int> enabled;   // empty = whole registry
};

struct VulnConfig {
  int k = 40;
  int shapley_k = 5;
  int bins = 10;
  bool risk_per_class = true;
  double neighbor_threshold = 0.1;
  int reference_models = 10;
  int repetitions = 2;  // full-pipeline repetitions feeding the overlap matrix
};

struct OutputConfig {
  std::string dir;
  bool save_models = false;
  bool dump_signals = false;
};

struct RunConfig {
  DatasetConfig dataset;
  SplitRates rates;
  int split_num = 20;
  TrainSpec model;
  AttacksConfig attacks;
  VulnConfig vuln;
  OutputConfig output;
  std::uint64_t seed = 42;
};

// Flat key=value lines, '#' comments, unknown or duplicate keys rejected.
RunConfig parse_config(const std::string& text);
RunConfig load_config_file(const std::string& path);

// Canonical form: every key, sorted, doubles at 17 significant digits. The
// config hash is computed over this text.
std::string serialize_config(const RunConfig& config);
std::string config_hash(const RunConfig& config);

// Static validation (ranges, combinations). Corpus-dependent checks happen
// when the corpus is materialized.
void validate_config(const RunConfig& config);

// Registry ids this run executes (sorted; excludes the gap baseline).
std::vector<int> enabled_attack_ids(const RunConfig& config);

}  // namespace miaudit
