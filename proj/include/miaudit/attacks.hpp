#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "miaudit/dataset.hpp"
#include "miaudit/learners.hpp"
#include "miaudit/signals.hpp"

namespace miaudit {

enum class AttackKind { threshold, classifier, gap };

enum class Direction { higher_is_member, lower_is_member };

// Feature blocks fed to classifier attacks. Every set starts from the full
// probability vector; F2..F5 append scalar metrics.
enum class FeatureSet { F1 = 0, F2 = 1, F3 = 2, F4 = 3, F5 = 4 };

constexpr int kNumFeatureSets = 5;

const char* feature_set_name(FeatureSet fs);

// Fixed orientation per metric: confidence-flavored metrics are high for
// members, loss- and entropy-flavored metrics are low.
Direction metric_direction(Metric m);

struct AttackSpec {
  int attack_id = 0;
  AttackKind kind = AttackKind::threshold;
  bool relabelled = false;
  Metric metric = Metric::max_prob;         // threshold attacks
  Learner learner = Learner::linear_margin; // classifier attacks
  FeatureSet feature_set = FeatureSet::F1;  // classifier attacks

  std::string name() const;
};

// The canonical registry of 54 attacks: first the threshold block
// (7 metrics x direct/relabelled, metric-major), then the classifier block
// (4 learners x 5 feature sets x direct/relabelled, learner-major).
std::vector<AttackSpec> default_registry();

// Baseline that calls a point a member iff the source model classifies it
// correctly. Lives outside the registry under id -1.
AttackSpec gap_attack();

constexpr int kGapAttackId = -1;

struct ThresholdRule {
  Metric metric = Metric::max_prob;
  Direction direction = Direction::higher_is_member;
  double threshold = 0.0;
};

bool threshold_predicts_member(const ThresholdRule& rule, double value);

// Maximizes balanced accuracy over midpoints of adjacent values in the pooled
// sorted list (plus sentinels outside the range). Ties resolve to the
// smallest threshold. Comparisons run on integer counts, so the argmax is
// exact.
ThresholdRule calibrate_threshold(const std::vector<double>& member_values,
                                  const std::vector<double>& nonmember_values,
                                  Direction direction);

// (TPR + TNR) / 2 with members as positives.
double balanced_accuracy(const ThresholdRule& rule,
                         const std::vector<double>& member_values,
                         const std::vector<double>& nonmember_values);

std::vector<double> build_features(const SignalVector& sv, FeatureSet fs);

// One membership decision. b is the true bit from the split plan, b_pred the
// attack's inference.
struct InferenceRecord {
  int split_id = 0;
  int attack_id = 0;
  int point_id = 0;
  std::uint8_t b = 0;
  std::uint8_t b_pred = 0;
};

// Runs one attack on one split. Shadow signals calibrate the attack (their
// member bit comes from the plan's shadow partition), target signals are
// scored. Signals must come from the source models matching spec.relabelled;
// wiring that is the caller's contract. Records come back sorted by point id,
// one per target-data point.
std::vector<InferenceRecord> run_attack(const AttackSpec& spec,
                                        const SplitPlan& plan,
                                        const std::vector<SignalVector>& target_signals,
                                        const std::vector<SignalVector>& shadow_signals,
                                        std::uint64_t seed);

double attack_accuracy(const std::vector<InferenceRecord>& records);
double attack_accuracy(const std::vector<InferenceRecord>& records, int split_id,
                       int attack_id);

}  // namespace miaudit
