#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "miaudit/attacks.hpp"
#include "miaudit/dataset.hpp"
#include "miaudit/model.hpp"
#include "miaudit/rng.hpp"
#include "miaudit/signals.hpp"

using namespace miaudit;

namespace {

// balanced accuracy of a candidate threshold computed the slow way, in exact
// integer counts
long long oracle_score(double t, Direction dir,
                       const std::vector<double>& members,
                       const std::vector<double>& nonmembers) {
  long long tp = 0, tn = 0;
  for (double v : members) {
    bool pred = dir == Direction::higher_is_member ? v >= t : v <= t;
    if (pred) ++tp;
  }
  for (double v : nonmembers) {
    bool pred = dir == Direction::higher_is_member ? v >= t : v <= t;
    if (!pred) ++tn;
  }
  return tp * static_cast<long long>(nonmembers.size()) +
         tn * static_cast<long long>(members.size());
}

SignalVector make_signal(int point_id, int label, std::vector<double> prob) {
  // route through a fixed-output model so scalars stay consistent with prob
  TrainedModel m;
  m.input_dim = 1;
  m.n_classes = static_cast<int>(prob.size());
  Layer layer;
  layer.in = 1;
  layer.out = m.n_classes;
  layer.w.assign(prob.size(), 0.0);
  for (double p : prob) layer.b.push_back(std::log(std::max(p, 1e-300)));
  m.layers.push_back(layer);
  return extract_signals(m, {0.0}, point_id, label);
}

}  // namespace

TEST_CASE("the registry is 54 attacks in the documented order") {
  auto reg = default_registry();
  REQUIRE(reg.size() == 54);
  std::set<std::string> names;
  for (int i = 0; i < 54; ++i) {
    const AttackSpec& spec = reg[static_cast<std::size_t>(i)];
    CHECK(spec.attack_id == i);
    names.insert(spec.name());
    if (i < 14) {
      CHECK(spec.kind == AttackKind::threshold);
      CHECK(spec.metric == static_cast<Metric>(i / 2));
      CHECK(spec.relabelled == (i % 2 == 1));
    } else {
      int j = i - 14;
      CHECK(spec.kind == AttackKind::classifier);
      CHECK(spec.learner == static_cast<Learner>(j / 10));
      CHECK(spec.feature_set == static_cast<FeatureSet>((j / 2) % 5));
      CHECK(spec.relabelled == (j % 2 == 1));
    }
  }
  CHECK(names.size() == 54);  // all names distinct
  CHECK(reg[0].name() == "threshold_max_prob_direct");
  CHECK(reg[1].name() == "threshold_max_prob_relabelled");
  CHECK(reg[13].name() == "threshold_norm_entropy_relabelled");
  CHECK(reg[14].name() == "clf_linear_margin_F1_direct");
  CHECK(reg[53].name() == "clf_shallow_feedforward_F5_relabelled");
  CHECK(gap_attack().attack_id == kGapAttackId);
  CHECK(gap_attack().name() == "gap");
}

TEST_CASE("metric directions follow the confidence/loss split") {
  CHECK(metric_direction(Metric::max_prob) == Direction::higher_is_member);
  CHECK(metric_direction(Metric::gt_prob) == Direction::higher_is_member);
  CHECK(metric_direction(Metric::ce_loss) == Direction::lower_is_member);
  CHECK(metric_direction(Metric::celoss_variant) == Direction::lower_is_member);
  CHECK(metric_direction(Metric::mentr) == Direction::lower_is_member);
  CHECK(metric_direction(Metric::entropy) == Direction::lower_is_member);
  CHECK(metric_direction(Metric::norm_entropy) == Direction::lower_is_member);
}

TEST_CASE("threshold calibration on tiny hand cases") {
  ThresholdRule r = calibrate_threshold({1.0}, {0.0}, Direction::higher_is_member);
  CHECK(r.threshold == 0.5);
  CHECK(balanced_accuracy(r, {1.0}, {0.0}) == 1.0);

  r = calibrate_threshold({0.9, 0.8}, {0.4, 0.3}, Direction::higher_is_member);
  CHECK(r.threshold == 0.5 * (0.4 + 0.8));
  CHECK(balanced_accuracy(r, {0.9, 0.8}, {0.4, 0.3}) == 1.0);

  // indistinguishable values: every candidate scores the same, the smallest
  // (the low sentinel) wins
  r = calibrate_threshold({0.5, 0.5}, {0.5, 0.5}, Direction::higher_is_member);
  CHECK(r.threshold == -0.5);
  CHECK(balanced_accuracy(r, {0.5, 0.5}, {0.5, 0.5}) == 0.5);

  r = calibrate_threshold({0.1, 0.2}, {0.8, 0.9}, Direction::lower_is_member);
  CHECK(balanced_accuracy(r, {0.1, 0.2}, {0.8, 0.9}) == 1.0);
  CHECK(r.threshold == 0.5);

  CHECK_THROWS(calibrate_threshold({}, {0.1}, Direction::higher_is_member));
  CHECK_THROWS(calibrate_threshold({0.1}, {}, Direction::higher_is_member));
}

TEST_CASE("calibration is optimal over all candidate cuts") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    Direction dir = trial % 2 == 0 ? Direction::higher_is_member
                                   : Direction::lower_is_member;
    std::vector<double> members, nonmembers;
    int nm = 1 + static_cast<int>(rng.below(12));
    int nn = 1 + static_cast<int>(rng.below(12));
    for (int i = 0; i < nm; ++i) members.push_back(std::floor(rng.uniform01() * 8.0) / 8.0);
    for (int i = 0; i < nn; ++i) nonmembers.push_back(std::floor(rng.uniform01() * 8.0) / 8.0);
    ThresholdRule rule = calibrate_threshold(members, nonmembers, dir);
    long long best = oracle_score(rule.threshold, dir, members, nonmembers);

    std::vector<double> pool = members;
    pool.insert(pool.end(), nonmembers.begin(), nonmembers.end());
    std::sort(pool.begin(), pool.end());
    std::vector<double> cands{pool.front() - 1.0, pool.back() + 1.0};
    for (std::size_t i = 0; i + 1 < pool.size(); ++i)
      if (pool[i] < pool[i + 1]) cands.push_back(0.5 * (pool[i] + pool[i + 1]));
    for (double c : cands) {
      long long s = oracle_score(c, dir, members, nonmembers);
      CHECK(best >= s);
      if (s == best) CHECK(rule.threshold <= c);  // ties keep the smallest cut
    }
  }
}

TEST_CASE("threshold rules use closed comparisons") {
  ThresholdRule hi{Metric::max_prob, Direction::higher_is_member, 0.5};
  CHECK(threshold_predicts_member(hi, 0.5));
  CHECK(threshold_predicts_member(hi, 0.6));
  CHECK(!threshold_predicts_member(hi, 0.49));
  ThresholdRule lo{Metric::ce_loss, Direction::lower_is_member, 0.5};
  CHECK(threshold_predicts_member(lo, 0.5));
  CHECK(threshold_predicts_member(lo, 0.4));
  CHECK(!threshold_predicts_member(lo, 0.51));
}

TEST_CASE("feature blocks grow by the documented scalars") {
  SignalVector sv = make_signal(0, 1, {0.2, 0.5, 0.3});
  auto f1 = build_features(sv, FeatureSet::F1);
  auto f2 = build_features(sv, FeatureSet::F2);
  auto f3 = build_features(sv, FeatureSet::F3);
  auto f4 = build_features(sv, FeatureSet::F4);
  auto f5 = build_features(sv, FeatureSet::F5);
  // every set is the probability vector plus its own scalar block
  CHECK(f1 == sv.prob);
  REQUIRE(f2.size() == 5);
  CHECK(f2[3] == sv.max_prob);
  CHECK(f2[4] == sv.gt_prob);
  REQUIRE(f3.size() == 5);
  CHECK(f3[3] == sv.ce_loss);
  CHECK(f3[4] == sv.celoss_variant);
  REQUIRE(f4.size() == 4);
  CHECK(f4[3] == sv.mentr);
  REQUIRE(f5.size() == 10);
  CHECK(f5[3] == sv.max_prob);
  CHECK(f5[4] == sv.gt_prob);
  CHECK(f5[5] == sv.ce_loss);
  CHECK(f5[6] == sv.celoss_variant);
  CHECK(f5[7] == sv.mentr);
  CHECK(f5[8] == sv.entropy);
  CHECK(f5[9] == sv.norm_entropy);
}

TEST_CASE("every learner separates an easy shadow problem") {
  // members cluster at +1, nonmembers at -1, two features
  std::vector<std::vector<double>> mem, non;
  Rng rng(31);
  for (int i = 0; i < 40; ++i) {
    mem.push_back({1.0 + 0.1 * rng.normal(), 1.0 + 0.1 * rng.normal()});
    non.push_back({-1.0 + 0.1 * rng.normal(), -1.0 + 0.1 * rng.normal()});
  }
  for (int li = 0; li < kNumLearners; ++li) {
    Learner learner = static_cast<Learner>(li);
    BinaryClassifier clf = train_binary_classifier(learner, mem, non, 99);
    int correct = 0;
    for (const auto& x : mem) correct += clf.predict(x) == 1;
    for (const auto& x : non) correct += clf.predict(x) == 0;
    CHECK(correct == 80);

    BinaryClassifier again = train_binary_classifier(learner, mem, non, 99);
    CHECK(clf.decision_score(mem[0]) == again.decision_score(mem[0]));
  }
  CHECK_THROWS_AS(train_binary_classifier(Learner::linear_margin, {}, non, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(train_binary_classifier(Learner::linear_margin, mem, {}, 1),
                  std::invalid_argument);
  auto ragged = mem;
  ragged[0].push_back(0.0);
  CHECK_THROWS_AS(train_binary_classifier(Learner::linear_margin, ragged, non, 1),
                  std::invalid_argument);
}

TEST_CASE("score exactly zero lands on the nonmember side") {
  std::vector<std::vector<double>> mem{{1.0}}, non{{-1.0}};
  BinaryClassifier clf = train_binary_classifier(Learner::linear_margin, mem, non, 5);
  // standardized midpoint scores zero by symmetry
  CHECK(clf.decision_score({0.0}) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(clf.predict({0.0}) == 0);
}

namespace {

// shadow members confident, shadow nonmembers unsure; target mirrors that
struct AttackFixture {
  SplitPlan plan;
  std::vector<SignalVector> target, shadow;

  AttackFixture() {
    plan.split_id = 2;
    plan.n_points = 8;
    plan.target_train_ids = {0, 1};
    plan.target_test_ids = {2, 3};
    plan.shadow_train_ids = {4, 5};
    plan.shadow_test_ids = {6, 7};
    // target block: train rows then test rows
    target.push_back(make_signal(0, 0, {0.95, 0.03, 0.02}));
    target.push_back(make_signal(1, 0, {0.90, 0.06, 0.04}));
    target.push_back(make_signal(2, 0, {0.40, 0.35, 0.25}));
    target.push_back(make_signal(3, 2, {0.30, 0.40, 0.30}));
    shadow.push_back(make_signal(4, 0, {0.97, 0.02, 0.01}));
    shadow.push_back(make_signal(5, 0, {0.93, 0.04, 0.03}));
    shadow.push_back(make_signal(6, 1, {0.40, 0.30, 0.30}));
    shadow.push_back(make_signal(7, 0, {0.34, 0.33, 0.33}));
  }
};

}  // namespace

TEST_CASE("run_attack emits one sorted record per target point") {
  AttackFixture fx;
  auto reg = default_registry();
  auto records = run_attack(reg[0], fx.plan, fx.target, fx.shadow, 77);
  REQUIRE(records.size() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(records[static_cast<std::size_t>(i)].point_id == i);
    CHECK(records[static_cast<std::size_t>(i)].split_id == 2);
    CHECK(records[static_cast<std::size_t>(i)].attack_id == 0);
  }
  CHECK(records[0].b == 1);
  CHECK(records[1].b == 1);
  CHECK(records[2].b == 0);
  CHECK(records[3].b == 0);
  // max_prob separates 0.95/0.96 from 0.40: a perfect split
  CHECK(records[0].b_pred == 1);
  CHECK(records[1].b_pred == 1);
  CHECK(records[2].b_pred == 0);
  CHECK(records[3].b_pred == 0);
  CHECK(attack_accuracy(records) == 1.0);
  CHECK(attack_accuracy(records, 2, 0) == 1.0);
  CHECK_THROWS(attack_accuracy(records, 3, 0));
  CHECK_THROWS(attack_accuracy(std::vector<InferenceRecord>{}));

  // classifier attacks run the same interface; the fixture separates linearly
  // in the probability vector alone, so F1 and F2 both transfer
  auto clf_records = run_attack(reg[16], fx.plan, fx.target, fx.shadow, 78);
  REQUIRE(clf_records.size() == 4);
  CHECK(attack_accuracy(clf_records) == 1.0);
  auto f1_records = run_attack(reg[14], fx.plan, fx.target, fx.shadow, 79);
  REQUIRE(f1_records.size() == 4);
  CHECK(attack_accuracy(f1_records) == 1.0);
}

TEST_CASE("run_attack validates signal coverage") {
  AttackFixture fx;
  auto reg = default_registry();
  auto missing_target = fx.target;
  missing_target.pop_back();
  CHECK_THROWS(run_attack(reg[0], fx.plan, missing_target, fx.shadow, 1));
  // dropping the whole member side leaves nothing to calibrate on
  auto missing_shadow = fx.shadow;
  missing_shadow.erase(missing_shadow.begin(), missing_shadow.begin() + 2);
  CHECK_THROWS(run_attack(reg[0], fx.plan, fx.target, missing_shadow, 1));
  // a shadow signal for a point outside the shadow partitions is a wiring bug
  auto stray_shadow = fx.shadow;
  stray_shadow.push_back(make_signal(0, 0, {0.5, 0.3, 0.2}));
  CHECK_THROWS(run_attack(reg[0], fx.plan, fx.target, stray_shadow, 1));
}

TEST_CASE("the gap rule follows argmax correctness") {
  AttackFixture fx;
  auto records = run_attack(gap_attack(), fx.plan, fx.target, fx.shadow, 3);
  REQUIRE(records.size() == 4);
  CHECK(records[0].attack_id == kGapAttackId);
  // points 0,1 correctly argmaxed (members), 2 correct (label 0, argmax 0),
  // 3 wrong (label 2, argmax 1)
  CHECK(records[0].b_pred == 1);
  CHECK(records[1].b_pred == 1);
  CHECK(records[2].b_pred == 1);
  CHECK(records[3].b_pred == 0);
  CHECK(attack_accuracy(records) == 0.75);
}

TEST_CASE("gap accuracy equals the train test identity on equal eval sizes") {
  Corpus corpus = generate_synthetic(120, 3, 6, 0.25, 0.35, 41);
  SplitRates rates{0.5, 0.5, 0.5};
  SplitPlan plan = make_split(corpus, rates, 0, 555);
  TrainSpec spec;
  spec.hidden_widths = {16};
  spec.epochs = 30;
  spec.seed = 6;
  TrainedModel target = train(corpus, plan.target_train_ids, {}, spec, ModelRole::target, 0);

  std::vector<SignalVector> target_sigs;
  for (int id : plan.target_train_ids)
    target_sigs.push_back(extract_signals_point(target, corpus, id, corpus.point(id).label));
  for (int id : plan.target_test_ids)
    target_sigs.push_back(extract_signals_point(target, corpus, id, corpus.point(id).label));
  std::vector<SignalVector> shadow_sigs;
  for (int id : plan.shadow_train_ids)
    shadow_sigs.push_back(extract_signals_point(target, corpus, id, corpus.point(id).label));
  for (int id : plan.shadow_test_ids)
    shadow_sigs.push_back(extract_signals_point(target, corpus, id, corpus.point(id).label));

  auto records = run_attack(gap_attack(), plan, target_sigs, shadow_sigs, 9);
  double train_acc = accuracy(target, corpus, plan.target_train_ids);
  double test_acc = accuracy(target, corpus, plan.target_test_ids);
  REQUIRE(plan.target_train_ids.size() == plan.target_test_ids.size());
  CHECK(attack_accuracy(records) == doctest::Approx((train_acc + 1.0 - test_acc) / 2.0).epsilon(1e-12));
}
