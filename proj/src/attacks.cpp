#include "miaudit/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace miaudit {

const char* feature_set_name(FeatureSet fs) {
  switch (fs) {
    case FeatureSet::F1: return "F1";
    case FeatureSet::F2: return "F2";
    case FeatureSet::F3: return "F3";
    case FeatureSet::F4: return "F4";
    case FeatureSet::F5: return "F5";
  }
  return "F1";
}

Direction metric_direction(Metric m) {
  switch (m) {
    case Metric::max_prob:
    case Metric::gt_prob:
      return Direction::higher_is_member;
    default:
      return Direction::lower_is_member;
  }
}

std::string AttackSpec::name() const {
  switch (kind) {
    case AttackKind::gap:
      return "gap";
    case AttackKind::threshold:
      return std::string("threshold_") + metric_name(metric) +
             (relabelled ? "_relabelled" : "_direct");
    case AttackKind::classifier:
      return std::string("clf_") + learner_name(learner) + "_" +
             feature_set_name(feature_set) + (relabelled ? "_relabelled" : "_direct");
  }
  return "gap";
}

std::vector<AttackSpec> default_registry() {
  std::vector<AttackSpec> specs;
  specs.reserve(54);
  int id = 0;
  for (int m = 0; m < kNumMetrics; ++m) {
    for (int rel = 0; rel < 2; ++rel) {
      AttackSpec s;
      s.attack_id = id++;
      s.kind = AttackKind::threshold;
      s.metric = static_cast<Metric>(m);
      s.relabelled = rel == 1;
      specs.push_back(s);
    }
  }
  for (int l = 0; l < kNumLearners; ++l) {
    for (int fs = 0; fs < kNumFeatureSets; ++fs) {
      for (int rel = 0; rel < 2; ++rel) {
        AttackSpec s;
        s.attack_id = id++;
        s.kind = AttackKind::classifier;
        s.learner = static_cast<Learner>(l);
        s.feature_set = static_cast<FeatureSet>(fs);
        s.relabelled = rel == 1;
        specs.push_back(s);
      }
    }
  }
  return specs;
}

AttackSpec gap_attack() {
  AttackSpec s;
  s.attack_id = kGapAttackId;
  s.kind = AttackKind::gap;
  return s;
}

bool threshold_predicts_member(const ThresholdRule& rule, double value) {
  return rule.direction == Direction::higher_is_member ? value >= rule.threshold
                                                       : value <= rule.threshold;
}

ThresholdRule calibrate_threshold(const std::vector<double>& member_values,
                                  const std::vector<double>& nonmember_values,
                                  Direction direction) {
  if (member_values.empty() || nonmember_values.empty())
    throw std::invalid_argument("calibrate_threshold: both value lists must be nonempty");
  for (double v : member_values)
    if (!std::isfinite(v)) throw std::invalid_argument("calibrate_threshold: non-finite member value");
  for (double v : nonmember_values)
    if (!std::isfinite(v)) throw std::invalid_argument("calibrate_threshold: non-finite nonmember value");

  std::vector<double> members(member_values);
  std::vector<double> nonmembers(nonmember_values);
  std::sort(members.begin(), members.end());
  std::sort(nonmembers.begin(), nonmembers.end());

  std::vector<double> pooled;
  pooled.reserve(members.size() + nonmembers.size());
  pooled.insert(pooled.end(), members.begin(), members.end());
  pooled.insert(pooled.end(), nonmembers.begin(), nonmembers.end());
  std::sort(pooled.begin(), pooled.end());
  pooled.erase(std::unique(pooled.begin(), pooled.end()), pooled.end());

  std::vector<double> candidates;
  candidates.reserve(pooled.size() + 1);
  candidates.push_back(pooled.front() - 1.0);
  for (std::size_t i = 0; i + 1 < pooled.size(); ++i)
    candidates.push_back(0.5 * (pooled[i] + pooled[i + 1]));
  candidates.push_back(pooled.back() + 1.0);

  long long nm = static_cast<long long>(members.size());
  long long nn = static_cast<long long>(nonmembers.size());
  // balanced accuracy compares as tp*nn + tn*nm over the common denominator
  long long best_num = -1;
  double best_threshold = candidates.front();
  for (double t : candidates) {
    long long tp, tn;
    if (direction == Direction::higher_is_member) {
      tp = nm - (std::lower_bound(members.begin(), members.end(), t) - members.begin());
      tn = std::lower_bound(nonmembers.begin(), nonmembers.end(), t) - nonmembers.begin();
    } else {
      tp = std::upper_bound(members.begin(), members.end(), t) - members.begin();
      tn = nn - (std::upper_bound(nonmembers.begin(), nonmembers.end(), t) - nonmembers.begin());
    }
    long long num = tp * nn + tn * nm;
    if (num > best_num) {  // candidates ascend, so ties keep the smallest threshold
      best_num = num;
      best_threshold = t;
    }
  }
  ThresholdRule rule;
  rule.direction = direction;
  rule.threshold = best_threshold;
  return rule;
}

double balanced_accuracy(const ThresholdRule& rule,
                         const std::vector<double>& member_values,
                         const std::vector<double>& nonmember_values) {
  if (member_values.empty() || nonmember_values.empty())
    throw std::invalid_argument("balanced_accuracy: both value lists must be nonempty");
  long long tp = 0, tn = 0;
  for (double v : member_values)
    if (threshold_predicts_member(rule, v)) ++tp;
  for (double v : nonmember_values)
    if (!threshold_predicts_member(rule, v)) ++tn;
  double tpr = static_cast<double>(tp) / static_cast<double>(member_values.size());
  double tnr = static_cast<double>(tn) / static_cast<double>(nonmember_values.size());
  return 0.5 * (tpr + tnr);
}

std::vector<double> build_features(const SignalVector& sv, FeatureSet fs) {
  std::vector<double> f = sv.prob;
  switch (fs) {
    case FeatureSet::F1:
      break;
    case FeatureSet::F2:
      f.push_back(sv.max_prob);
      f.push_back(sv.gt_prob);
      break;
    case FeatureSet::F3:
      f.push_back(sv.ce_loss);
      f.push_back(sv.celoss_variant);
      break;
    case FeatureSet::F4:
      f.push_back(sv.mentr);
      break;
    case FeatureSet::F5:
      for (int m = 0; m < kNumMetrics; ++m)
        f.push_back(get_metric(sv, static_cast<Metric>(m)));
      break;
  }
  return f;
}

namespace {

int argmax_lowest(const std::vector<double>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(best)]) best = i;
  return best;
}

}  // namespace

std::vector<InferenceRecord> run_attack(const AttackSpec& spec,
                                        const SplitPlan& plan,
                                        const std::vector<SignalVector>& target_signals,
                                        const std::vector<SignalVector>& shadow_signals,
                                        std::uint64_t seed) {
  std::unordered_set<int> member_ids(plan.target_train_ids.begin(), plan.target_train_ids.end());
  std::unordered_set<int> nonmember_ids(plan.target_test_ids.begin(), plan.target_test_ids.end());
  std::unordered_set<int> shadow_members(plan.shadow_train_ids.begin(), plan.shadow_train_ids.end());
  std::unordered_set<int> shadow_nonmembers(plan.shadow_test_ids.begin(), plan.shadow_test_ids.end());

  std::size_t target_count = member_ids.size() + nonmember_ids.size();
  std::unordered_map<int, const SignalVector*> by_id;
  by_id.reserve(target_signals.size());
  for (const auto& sv : target_signals) {
    if (!member_ids.count(sv.point_id) && !nonmember_ids.count(sv.point_id))
      throw std::invalid_argument("run_attack: signal for point " + std::to_string(sv.point_id) +
                                  " which is not target data in split " + std::to_string(plan.split_id));
    if (!by_id.emplace(sv.point_id, &sv).second)
      throw std::invalid_argument("run_attack: duplicate signal for point " + std::to_string(sv.point_id));
  }
  if (by_id.size() != target_count)
    throw std::invalid_argument("run_attack: missing signals for " +
                                std::to_string(target_count - by_id.size()) +
                                " target points in split " + std::to_string(plan.split_id));

  std::vector<int> ordered_ids;
  ordered_ids.reserve(target_count);
  for (int id : plan.target_train_ids) ordered_ids.push_back(id);
  for (int id : plan.target_test_ids) ordered_ids.push_back(id);
  std::sort(ordered_ids.begin(), ordered_ids.end());

  auto make_record = [&](int id, int b_pred) {
    InferenceRecord rec;
    rec.split_id = plan.split_id;
    rec.attack_id = spec.attack_id;
    rec.point_id = id;
    rec.b = member_ids.count(id) ? 1 : 0;
    rec.b_pred = static_cast<std::uint8_t>(b_pred);
    return rec;
  };

  std::vector<InferenceRecord> records;
  records.reserve(target_count);

  if (spec.kind == AttackKind::gap) {
    for (int id : ordered_ids) {
      const SignalVector& sv = *by_id.at(id);
      int b_pred = argmax_lowest(sv.prob) == sv.label ? 1 : 0;
      records.push_back(make_record(id, b_pred));
    }
    return records;
  }

  std::vector<const SignalVector*> shadow_member_sv, shadow_nonmember_sv;
  for (const auto& sv : shadow_signals) {
    if (shadow_members.count(sv.point_id))
      shadow_member_sv.push_back(&sv);
    else if (shadow_nonmembers.count(sv.point_id))
      shadow_nonmember_sv.push_back(&sv);
    else
      throw std::invalid_argument("run_attack: shadow signal for point " +
                                  std::to_string(sv.point_id) +
                                  " which is not shadow data in split " +
                                  std::to_string(plan.split_id));
  }
  if (shadow_member_sv.empty() || shadow_nonmember_sv.empty())
    throw std::invalid_argument("run_attack: shadow signals must cover both membership sides");

  if (spec.kind == AttackKind::threshold) {
    std::vector<double> member_values, nonmember_values;
    member_values.reserve(shadow_member_sv.size());
    nonmember_values.reserve(shadow_nonmember_sv.size());
    for (const auto* sv : shadow_member_sv) member_values.push_back(get_metric(*sv, spec.metric));
    for (const auto* sv : shadow_nonmember_sv) nonmember_values.push_back(get_metric(*sv, spec.metric));
    ThresholdRule rule = calibrate_threshold(member_values, nonmember_values,
                                             metric_direction(spec.metric));
    rule.metric = spec.metric;
    for (int id : ordered_ids) {
      double v = get_metric(*by_id.at(id), spec.metric);
      records.push_back(make_record(id, threshold_predicts_member(rule, v) ? 1 : 0));
    }
    return records;
  }

  // classifier attack
  std::vector<std::vector<double>> member_feats, nonmember_feats;
  member_feats.reserve(shadow_member_sv.size());
  nonmember_feats.reserve(shadow_nonmember_sv.size());
  for (const auto* sv : shadow_member_sv) member_feats.push_back(build_features(*sv, spec.feature_set));
  for (const auto* sv : shadow_nonmember_sv) nonmember_feats.push_back(build_features(*sv, spec.feature_set));
  BinaryClassifier clf = train_binary_classifier(spec.learner, member_feats, nonmember_feats, seed);
  for (int id : ordered_ids) {
    auto f = build_features(*by_id.at(id), spec.feature_set);
    records.push_back(make_record(id, clf.predict(f)));
  }
  return records;
}

double attack_accuracy(const std::vector<InferenceRecord>& records) {
  if (records.empty()) throw std::invalid_argument("attack_accuracy: no records");
  long long correct = 0;
  for (const auto& r : records)
    if (r.b == r.b_pred) ++correct;
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

double attack_accuracy(const std::vector<InferenceRecord>& records, int split_id,
                       int attack_id) {
  long long correct = 0, total = 0;
  for (const auto& r : records) {
    if (r.split_id != split_id || r.attack_id != attack_id) continue;
    ++total;
    if (r.b == r.b_pred) ++correct;
  }
  if (total == 0)
    throw std::invalid_argument("attack_accuracy: no records for split " +
                                std::to_string(split_id) + ", attack " +
                                std::to_string(attack_id));
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace miaudit
