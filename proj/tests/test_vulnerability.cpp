#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "miaudit/dataset.hpp"
#include "miaudit/vulnerability.hpp"

using namespace miaudit;

namespace {

// Exhaustive Shapley values for the nearest-neighbor utility, one test point:
// U(S) = (1/K) * sum of label matches over the min(K,|S|) nearest members of
// S, U(empty) = 0. Feasible because the fixtures keep n tiny.
std::vector<double> shapley_by_enumeration(const std::vector<double>& train_pos,
                                           const std::vector<int>& train_labels,
                                           double test_pos, int test_label, int K) {
  int n = static_cast<int>(train_pos.size());
  auto utility = [&](unsigned mask) {
    std::vector<int> members;
    for (int i = 0; i < n; ++i)
      if (mask & (1u << i)) members.push_back(i);
    if (members.empty()) return 0.0;
    std::sort(members.begin(), members.end(), [&](int a, int b) {
      double da = std::abs(train_pos[static_cast<std::size_t>(a)] - test_pos);
      double db = std::abs(train_pos[static_cast<std::size_t>(b)] - test_pos);
      if (da != db) return da < db;
      return a < b;
    });
    int take = std::min<int>(K, static_cast<int>(members.size()));
    double matches = 0.0;
    for (int j = 0; j < take; ++j)
      if (train_labels[static_cast<std::size_t>(members[static_cast<std::size_t>(j)])] == test_label)
        matches += 1.0;
    return matches / static_cast<double>(K);
  };

  std::vector<double> fact(static_cast<std::size_t>(n) + 1, 1.0);
  for (int i = 1; i <= n; ++i) fact[static_cast<std::size_t>(i)] = fact[static_cast<std::size_t>(i - 1)] * i;

  std::vector<double> phi(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
      if (mask & (1u << i)) continue;
      int s = __builtin_popcount(mask);
      double weight = fact[static_cast<std::size_t>(s)] *
                      fact[static_cast<std::size_t>(n - s - 1)] / fact[static_cast<std::size_t>(n)];
      phi[static_cast<std::size_t>(i)] += weight * (utility(mask | (1u << i)) - utility(mask));
    }
  }
  return phi;
}

Corpus line_corpus(const std::vector<double>& xs) {
  Corpus c;
  c.n_classes = 2;
  c.dim = 1;
  for (std::size_t i = 0; i < xs.size(); ++i)
    c.points.push_back({static_cast<int>(i), {xs[i]}, 0});
  return c;
}

}  // namespace

TEST_CASE("top_k_by_rate picks the highest rates with ties to the lower id") {
  std::vector<PointRates> prs(5);
  for (int i = 0; i < 5; ++i) prs[static_cast<std::size_t>(i)].point_id = i;
  auto set_amer = [&prs](int id, double v) {
    prs[static_cast<std::size_t>(id)].has_amer = true;
    prs[static_cast<std::size_t>(id)].amer = v;
  };
  set_amer(0, 0.7);
  set_amer(1, 0.9);
  set_amer(3, 0.7);
  set_amer(4, 0.2);
  // point 2 never member-side, hence ineligible
  prs[2].has_anmer = true;
  prs[2].anmer = 1.0;

  VulnerableSet top = top_k_by_rate(prs, RateKind::amer, 3);
  CHECK(top.method == "amer_topk");
  CHECK(top.k == 3);
  CHECK(top.ids == std::vector<int>{1, 0, 3});
  CHECK(top.scores == std::vector<double>{0.9, 0.7, 0.7});

  VulnerableSet anmer = top_k_by_rate(prs, RateKind::anmer, 1);
  CHECK(anmer.method == "anmer_topk");
  CHECK(anmer.ids == std::vector<int>{2});

  CHECK_THROWS_WITH_AS(top_k_by_rate(prs, RateKind::amer, 5),
                       doctest::Contains("eligible points"), std::invalid_argument);
  CHECK_THROWS_AS(top_k_by_rate(prs, RateKind::amer, 0), std::invalid_argument);
}

TEST_CASE("top_k_scored is a generic descending top-k") {
  VulnerableSet s = top_k_scored("custom", {10, 11, 12, 13}, {0.5, 0.5, 0.9, 0.1}, 3);
  CHECK(s.method == "custom");
  CHECK(s.ids == std::vector<int>{12, 10, 11});
  CHECK(s.scores == std::vector<double>{0.9, 0.5, 0.5});
  CHECK_THROWS_AS(top_k_scored("custom", {1, 2}, {0.5}, 1), std::invalid_argument);
  CHECK_THROWS_AS(top_k_scored("custom", {1}, {0.5}, 2), std::invalid_argument);
}

TEST_CASE("aggregate_top_frequent counts appearances across lists") {
  VulnerableSet s = aggregate_top_frequent({{1, 2, 3}, {2, 3, 4}, {3, 9}}, 3);
  CHECK(s.ids == std::vector<int>{3, 2, 1});  // counts 3, 2, then tie at 1 -> lowest id
  CHECK(s.scores == std::vector<double>{3.0, 2.0, 1.0});
  CHECK_THROWS_AS(aggregate_top_frequent({}, 1), std::invalid_argument);
}

TEST_CASE("knn shapley matches exhaustive enumeration") {
  std::vector<double> train_pos{0.0, 1.0, 2.5, 4.0, 5.5};
  std::vector<int> train_labels{1, 0, 1, 0, 1};
  std::vector<double> test_pos{0.4, 2.4, 5.0};
  std::vector<int> test_labels{1, 0, 1};

  std::vector<std::vector<double>> train_out, test_out;
  for (double x : train_pos) train_out.push_back({x});
  for (double x : test_pos) test_out.push_back({x});

  for (int K : {1, 2}) {
    auto fast = knn_shapley(train_out, train_labels, test_out, test_labels, K);
    REQUIRE(fast.size() == 5);
    std::vector<double> slow(5, 0.0);
    for (std::size_t t = 0; t < test_pos.size(); ++t) {
      auto phi = shapley_by_enumeration(train_pos, train_labels, test_pos[t], test_labels[t], K);
      for (int i = 0; i < 5; ++i) slow[static_cast<std::size_t>(i)] += phi[static_cast<std::size_t>(i)];
    }
    double full_utility = 0.0;
    for (std::size_t t = 0; t < test_pos.size(); ++t) {
      // efficiency: the values must sum to the utility of the full set
      std::vector<int> order{0, 1, 2, 3, 4};
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        return std::abs(train_pos[static_cast<std::size_t>(a)] - test_pos[t]) <
               std::abs(train_pos[static_cast<std::size_t>(b)] - test_pos[t]);
      });
      for (int j = 0; j < K; ++j)
        if (train_labels[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])] == test_labels[t])
          full_utility += 1.0 / K;
    }
    double fast_sum = 0.0;
    for (int i = 0; i < 5; ++i) {
      CHECK(std::abs(fast[static_cast<std::size_t>(i)] - slow[static_cast<std::size_t>(i)]) <= 1e-9);
      fast_sum += fast[static_cast<std::size_t>(i)];
    }
    CHECK(std::abs(fast_sum - full_utility) <= 1e-9);
  }

  CHECK_THROWS_AS(knn_shapley({}, {}, test_out, test_labels, 1), std::invalid_argument);
  CHECK_THROWS_AS(knn_shapley(train_out, train_labels, {}, {}, 1), std::invalid_argument);
  CHECK_THROWS_AS(knn_shapley(train_out, {1, 0}, test_out, test_labels, 1), std::invalid_argument);
  CHECK_THROWS_AS(knn_shapley(train_out, train_labels, test_out, test_labels, 0), std::invalid_argument);
  auto ragged = train_out;
  ragged[1].push_back(9.0);
  CHECK_THROWS_AS(knn_shapley(ragged, train_labels, test_out, test_labels, 1), std::invalid_argument);
}

TEST_CASE("privacy risk histograms follow the hand-computed densities") {
  std::vector<double> mem{0.0, 0.25, 0.25};
  std::vector<int> mem_labels{0, 0, 0};
  std::vector<double> non{0.75, 1.0};
  std::vector<int> non_labels{0, 0};
  // two bins over [0, 1]: members all land low, nonmembers all high
  auto scores = privacy_risk_scores(mem, mem_labels, non, non_labels,
                                    {0.2, 0.9, -5.0, 7.0}, {0, 0, 0, 0},
                                    /*per_class=*/false, 2);
  REQUIRE(scores.size() == 4);
  CHECK(scores[0] == 1.0);
  CHECK(scores[1] == 0.0);
  CHECK(scores[2] == 1.0);  // clamps into the low bin
  CHECK(scores[3] == 0.0);  // clamps into the high bin

  // a bin empty on both sides scores the agnostic 0.5
  auto sparse = privacy_risk_scores({0.0, 1.0}, {0, 0}, {0.0, 1.0}, {0, 0},
                                    {0.3}, {0}, false, 4);
  CHECK(sparse[0] == 0.5);

  // degenerate range: every value identical still works
  auto flat = privacy_risk_scores({0.5}, {0}, {0.5}, {0}, {0.5}, {0}, false, 3);
  CHECK(flat[0] == 0.5);
}

TEST_CASE("per-class risk keeps the class distributions apart") {
  std::vector<double> mem{0.1, 0.9};
  std::vector<int> mem_labels{0, 1};
  std::vector<double> non{0.9, 0.1};
  std::vector<int> non_labels{0, 1};
  auto scores = privacy_risk_scores(mem, mem_labels, non, non_labels,
                                    {0.15, 0.85, 0.85}, {0, 0, 1},
                                    /*per_class=*/true, 2);
  REQUIRE(scores.size() == 3);
  CHECK(scores[0] == 1.0);  // class 0, low value: member side
  CHECK(scores[1] == 0.0);  // class 0, high value: nonmember side
  CHECK(scores[2] == 1.0);  // class 1 flips the geometry

  CHECK_THROWS_WITH_AS(privacy_risk_scores(mem, mem_labels, non, non_labels,
                                           {0.5}, {7}, true, 2),
                       doctest::Contains("no shadow data for class"),
                       std::invalid_argument);
  CHECK_THROWS_AS(privacy_risk_scores({}, {}, non, non_labels, {0.5}, {0}, false, 2),
                  std::invalid_argument);
  CHECK_THROWS_AS(privacy_risk_scores(mem, {0}, non, non_labels, {0.5}, {0}, false, 2),
                  std::invalid_argument);
  CHECK_THROWS_AS(privacy_risk_scores(mem, mem_labels, non, non_labels, {0.5}, {0}, false, 0),
                  std::invalid_argument);
}

TEST_CASE("outlier baseline ranks by mean distance to the nearest points") {
  Corpus c = line_corpus({0.0, 1.0, 2.0, 10.0});
  VulnerableSet s = outlier_baseline(c, 3);
  CHECK(s.method == "outlier_baseline");
  // mean distances: 13/3, 11/3, 11/3, 9; the 11/3 tie resolves to id 1
  CHECK(s.ids == std::vector<int>{3, 0, 1});
  CHECK(s.scores[0] == doctest::Approx(9.0).epsilon(1e-12));
  CHECK(s.scores[1] == doctest::Approx(13.0 / 3.0).epsilon(1e-12));
  CHECK(s.scores[2] == doctest::Approx(11.0 / 3.0).epsilon(1e-12));

  CHECK_THROWS_AS(outlier_baseline(line_corpus({1.0}), 1), std::invalid_argument);
  CHECK_THROWS_AS(outlier_baseline(c, 5), std::invalid_argument);
  CHECK_THROWS_AS(outlier_baseline(c, 0), std::invalid_argument);
}

TEST_CASE("neighbor counting is deterministic and respects the threshold") {
  Corpus corpus = generate_synthetic(36, 3, 4, 0.3, 0.1, 61);
  std::vector<int> targets, refs;
  for (int i = 0; i < 24; ++i) targets.push_back(i);
  for (int i = 24; i < 36; ++i) refs.push_back(i);
  TrainSpec spec;
  spec.hidden_widths = {4};
  spec.epochs = 2;
  spec.batch_size = 8;

  // cosine distance tops out at 2, so 2.5 counts every reference point as a
  // neighbor: a full tie resolved by id, at the pool-size score
  VulnerableSet everything = neighbors_based(corpus, targets, refs, spec, 2, 2.5, 5, 77);
  CHECK(everything.method == "neighbors");
  CHECK(everything.ids == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(everything.scores == std::vector<double>(5, 12.0));

  // a vanishing threshold counts nobody: same tie, zero score
  VulnerableSet nothing = neighbors_based(corpus, targets, refs, spec, 2, 1e-15, 5, 77);
  CHECK(nothing.ids == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(nothing.scores == std::vector<double>(5, 0.0));

  VulnerableSet a = neighbors_based(corpus, targets, refs, spec, 3, 0.05, 6, 123);
  VulnerableSet b = neighbors_based(corpus, targets, refs, spec, 3, 0.05, 6, 123);
  CHECK(a.ids == b.ids);
  CHECK(a.scores == b.scores);
  CHECK(a.k == 6);
  for (int id : a.ids) {
    CHECK(id >= 0);
    CHECK(id < 24);
  }
  // scores ascend: fewest neighbors means most isolated, ranked first
  for (std::size_t i = 1; i < a.scores.size(); ++i) CHECK(a.scores[i - 1] <= a.scores[i]);

  CHECK_THROWS_AS(neighbors_based(corpus, targets, {}, spec, 2, 0.1, 5, 1), std::invalid_argument);
  CHECK_THROWS_AS(neighbors_based(corpus, {}, refs, spec, 2, 0.1, 5, 1), std::invalid_argument);
  CHECK_THROWS_AS(neighbors_based(corpus, targets, targets, spec, 2, 0.1, 5, 1), std::invalid_argument);
  CHECK_THROWS_AS(neighbors_based(corpus, targets, refs, spec, 0, 0.1, 5, 1), std::invalid_argument);
  CHECK_THROWS_AS(neighbors_based(corpus, targets, refs, spec, 2, 0.0, 5, 1), std::invalid_argument);
  CHECK_THROWS_AS(neighbors_based(corpus, targets, refs, spec, 2, 0.1, 25, 1), std::invalid_argument);
}

TEST_CASE("overlap matrix intersects id sets pairwise") {
  VulnerableSet s1, s2, s3;
  s1.method = "a";
  s1.k = 2;
  s1.ids = {1, 2};
  s2.method = "b";
  s2.k = 2;
  s2.ids = {2, 3};
  s3.method = "c";
  s3.k = 2;
  s3.ids = {7, 8};
  auto mat = overlap_matrix({s1, s2, s3});
  CHECK(mat == std::vector<std::vector<int>>{{2, 1, 0}, {1, 2, 0}, {0, 0, 2}});

  VulnerableSet bad;
  bad.k = 3;
  bad.ids = {1, 2, 3};
  CHECK_THROWS_WITH_AS(overlap_matrix({s1, bad}), doctest::Contains("mismatched k"),
                       std::invalid_argument);
  CHECK_THROWS_AS(overlap_matrix({}), std::invalid_argument);
}
