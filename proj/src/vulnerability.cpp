#include "miaudit/vulnerability.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "miaudit/rng.hpp"

namespace miaudit {

namespace {

void take_top_k(VulnerableSet& set, std::vector<std::pair<int, double>>& scored,
                int k, bool higher_first) {
  if (static_cast<int>(scored.size()) < k)
    throw std::invalid_argument(set.method + ": only " + std::to_string(scored.size()) +
                                " eligible points for k=" + std::to_string(k));
  std::sort(scored.begin(), scored.end(),
            [higher_first](const auto& a, const auto& b) {
              if (a.second != b.second)
                return higher_first ? a.second > b.second : a.second < b.second;
              return a.first < b.first;
            });
  set.k = k;
  set.ids.reserve(static_cast<std::size_t>(k));
  set.scores.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    set.ids.push_back(scored[static_cast<std::size_t>(i)].first);
    set.scores.push_back(scored[static_cast<std::size_t>(i)].second);
  }
}

}  // namespace

VulnerableSet top_k_by_rate(const std::vector<PointRates>& point_rates,
                            RateKind kind, int k) {
  if (k < 1) throw std::invalid_argument("top_k_by_rate: k must be >= 1");
  VulnerableSet set;
  set.method = kind == RateKind::amer ? "amer_topk" : "anmer_topk";
  std::vector<std::pair<int, double>> scored;
  for (const auto& pr : point_rates) {
    if (kind == RateKind::amer && pr.has_amer) scored.emplace_back(pr.point_id, pr.amer);
    if (kind == RateKind::anmer && pr.has_anmer) scored.emplace_back(pr.point_id, pr.anmer);
  }
  take_top_k(set, scored, k, /*higher_first=*/true);
  return set;
}

VulnerableSet neighbors_based(const Corpus& corpus,
                              const std::vector<int>& target_ids,
                              const std::vector<int>& reference_ids,
                              const TrainSpec& train_spec,
                              int n_reference_models, double neighbor_threshold,
                              int k, std::uint64_t seed) {
  if (target_ids.empty()) throw std::invalid_argument("neighbors_based: no target points");
  if (reference_ids.empty()) throw std::invalid_argument("neighbors_based: empty reference pool");
  if (n_reference_models < 1)
    throw std::invalid_argument("neighbors_based: need at least one reference model");
  if (!(neighbor_threshold > 0.0))
    throw std::invalid_argument("neighbors_based: neighbor_threshold must be positive");
  if (k < 1 || k > static_cast<int>(target_ids.size()))
    throw std::invalid_argument("neighbors_based: k out of range");
  {
    std::unordered_set<int> targets(target_ids.begin(), target_ids.end());
    for (int id : reference_ids)
      if (targets.count(id))
        throw std::invalid_argument("neighbors_based: reference pool overlaps target ids");
  }

  std::vector<TrainedModel> models;
  models.reserve(static_cast<std::size_t>(n_reference_models));
  for (int r = 0; r < n_reference_models; ++r) {
    Rng boot(derive_seed(seed, "bootstrap", static_cast<std::uint64_t>(r)));
    std::vector<int> sample;
    sample.reserve(reference_ids.size());
    for (std::size_t i = 0; i < reference_ids.size(); ++i)
      sample.push_back(reference_ids[boot.below(reference_ids.size())]);
    TrainSpec spec = train_spec;
    spec.seed = derive_seed(seed, "reference_train", static_cast<std::uint64_t>(r));
    models.push_back(train(corpus, sample, {}, spec, ModelRole::reference, -1));
  }

  auto combination = [&models, &corpus](int id) {
    std::vector<double> feat;
    for (const auto& m : models) {
      auto p = predict_proba(m, corpus.point(id).features);
      feat.insert(feat.end(), p.begin(), p.end());
    }
    return feat;
  };

  std::vector<std::vector<double>> ref_feats;
  std::vector<double> ref_norms;
  ref_feats.reserve(reference_ids.size());
  for (int id : reference_ids) {
    auto f = combination(id);
    double n2 = std::inner_product(f.begin(), f.end(), f.begin(), 0.0);
    ref_norms.push_back(std::sqrt(n2));
    ref_feats.push_back(std::move(f));
  }

  std::vector<std::pair<int, double>> scored;
  scored.reserve(target_ids.size());
  for (int id : target_ids) {
    auto f = combination(id);
    double fn = std::sqrt(std::inner_product(f.begin(), f.end(), f.begin(), 0.0));
    int count = 0;
    for (std::size_t r = 0; r < ref_feats.size(); ++r) {
      double dot = std::inner_product(f.begin(), f.end(), ref_feats[r].begin(), 0.0);
      double dist = 1.0 - dot / (fn * ref_norms[r]);
      if (dist < neighbor_threshold) ++count;
    }
    scored.emplace_back(id, static_cast<double>(count));
  }

  VulnerableSet set;
  set.method = "neighbors";
  // fewest neighbors first: equivalent to sweeping the count cutoff upward
  // until k points qualify, then truncating
  take_top_k(set, scored, k, /*higher_first=*/false);
  return set;
}

std::vector<double> knn_shapley(const std::vector<std::vector<double>>& train_outputs,
                                const std::vector<int>& train_labels,
                                const std::vector<std::vector<double>>& test_outputs,
                                const std::vector<int>& test_labels, int k_neighbors) {
  std::size_t n = train_outputs.size();
  if (n == 0) throw std::invalid_argument("knn_shapley: empty training outputs");
  if (test_outputs.empty()) throw std::invalid_argument("knn_shapley: empty test outputs");
  if (train_labels.size() != n || test_labels.size() != test_outputs.size())
    throw std::invalid_argument("knn_shapley: labels misaligned with outputs");
  if (k_neighbors < 1) throw std::invalid_argument("knn_shapley: k_neighbors must be >= 1");
  std::size_t dim = train_outputs.front().size();
  for (const auto& v : train_outputs)
    if (v.size() != dim) throw std::invalid_argument("knn_shapley: inconsistent output width");
  for (const auto& v : test_outputs)
    if (v.size() != dim) throw std::invalid_argument("knn_shapley: inconsistent output width");

  std::vector<double> values(n, 0.0);
  std::vector<double> d2(n);
  std::vector<int> order(n);
  std::vector<double> s(n);
  double kd = static_cast<double>(k_neighbors);

  for (std::size_t t = 0; t < test_outputs.size(); ++t) {
    const auto& q = test_outputs[t];
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      const auto& v = train_outputs[i];
      for (std::size_t c = 0; c < dim; ++c) {
        double d = v[c] - q[c];
        acc += d * d;
      }
      d2[i] = acc;
    }
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&d2](int a, int b) {
      if (d2[static_cast<std::size_t>(a)] != d2[static_cast<std::size_t>(b)])
        return d2[static_cast<std::size_t>(a)] < d2[static_cast<std::size_t>(b)];
      return a < b;
    });
    auto match = [&](std::size_t pos) {
      return train_labels[static_cast<std::size_t>(order[pos])] == test_labels[t] ? 1.0 : 0.0;
    };
    s[static_cast<std::size_t>(order[n - 1])] = match(n - 1) / static_cast<double>(n);
    for (std::size_t pos = n - 1; pos > 0; --pos) {
      // pos is the 1-based rank of the nearer point in the sorted order
      double i_rank = static_cast<double>(pos);
      double scale = std::min(kd, i_rank) / (kd * i_rank);
      s[static_cast<std::size_t>(order[pos - 1])] =
          s[static_cast<std::size_t>(order[pos])] + (match(pos - 1) - match(pos)) * scale;
    }
    for (std::size_t i = 0; i < n; ++i) values[i] += s[i];
  }
  return values;
}

std::vector<double> privacy_risk_scores(const std::vector<double>& shadow_member_values,
                                        const std::vector<int>& shadow_member_labels,
                                        const std::vector<double>& shadow_nonmember_values,
                                        const std::vector<int>& shadow_nonmember_labels,
                                        const std::vector<double>& target_values,
                                        const std::vector<int>& target_labels,
                                        bool per_class, int n_bins) {
  if (n_bins < 1) throw std::invalid_argument("privacy_risk_scores: n_bins must be >= 1");
  if (shadow_member_values.empty() || shadow_nonmember_values.empty())
    throw std::invalid_argument("privacy_risk_scores: empty shadow distribution");
  if (shadow_member_labels.size() != shadow_member_values.size() ||
      shadow_nonmember_labels.size() != shadow_nonmember_values.size() ||
      target_labels.size() != target_values.size())
    throw std::invalid_argument("privacy_risk_scores: labels misaligned with values");

  struct Histogram {
    double lo = 0.0, width = 0.0;
    std::vector<long long> member, nonmember;
    long long member_total = 0, nonmember_total = 0;
  };

  auto build = [n_bins](const std::vector<double>& mv, const std::vector<double>& nv) {
    Histogram h;
    double lo = mv.front(), hi = mv.front();
    for (double v : mv) { lo = std::min(lo, v); hi = std::max(hi, v); }
    for (double v : nv) { lo = std::min(lo, v); hi = std::max(hi, v); }
    h.lo = lo;
    h.width = (hi - lo) / static_cast<double>(n_bins);
    h.member.assign(static_cast<std::size_t>(n_bins), 0);
    h.nonmember.assign(static_cast<std::size_t>(n_bins), 0);
    auto bin_of = [&h, n_bins](double v) {
      if (h.width <= 0.0) return 0;
      int b = static_cast<int>(std::floor((v - h.lo) / h.width));
      return std::clamp(b, 0, n_bins - 1);
    };
    for (double v : mv) { h.member[static_cast<std::size_t>(bin_of(v))]++; h.member_total++; }
    for (double v : nv) { h.nonmember[static_cast<std::size_t>(bin_of(v))]++; h.nonmember_total++; }
    return h;
  };

  auto score_from = [n_bins](const Histogram& h, double v) {
    int b = 0;
    if (h.width > 0.0)
      b = std::clamp(static_cast<int>(std::floor((v - h.lo) / h.width)), 0, n_bins - 1);
    double fm = static_cast<double>(h.member[static_cast<std::size_t>(b)]) /
                static_cast<double>(h.member_total);
    double fn = static_cast<double>(h.nonmember[static_cast<std::size_t>(b)]) /
                static_cast<double>(h.nonmember_total);
    if (fm + fn <= 0.0) return 0.5;  // bin unseen on both sides
    return fm / (fm + fn);
  };

  std::vector<double> scores(target_values.size(), 0.0);
  if (!per_class) {
    Histogram h = build(shadow_member_values, shadow_nonmember_values);
    for (std::size_t i = 0; i < target_values.size(); ++i)
      scores[i] = score_from(h, target_values[i]);
    return scores;
  }

  std::unordered_map<int, std::vector<double>> member_by_class, nonmember_by_class;
  for (std::size_t i = 0; i < shadow_member_values.size(); ++i)
    member_by_class[shadow_member_labels[i]].push_back(shadow_member_values[i]);
  for (std::size_t i = 0; i < shadow_nonmember_values.size(); ++i)
    nonmember_by_class[shadow_nonmember_labels[i]].push_back(shadow_nonmember_values[i]);

  std::unordered_map<int, Histogram> by_class;
  for (std::size_t i = 0; i < target_values.size(); ++i) {
    int cls = target_labels[i];
    auto it = by_class.find(cls);
    if (it == by_class.end()) {
      auto mv = member_by_class.find(cls);
      auto nv = nonmember_by_class.find(cls);
      if (mv == member_by_class.end() || nv == nonmember_by_class.end())
        throw std::invalid_argument("privacy_risk_scores: no shadow data for class " +
                                    std::to_string(cls));
      it = by_class.emplace(cls, build(mv->second, nv->second)).first;
    }
    scores[i] = score_from(it->second, target_values[i]);
  }
  return scores;
}

VulnerableSet top_k_scored(const std::string& method, const std::vector<int>& ids,
                           const std::vector<double>& scores, int k) {
  if (ids.size() != scores.size())
    throw std::invalid_argument("top_k_scored: ids and scores differ in length");
  if (k < 1) throw std::invalid_argument("top_k_scored: k must be >= 1");
  VulnerableSet set;
  set.method = method;
  std::vector<std::pair<int, double>> scored;
  scored.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) scored.emplace_back(ids[i], scores[i]);
  take_top_k(set, scored, k, /*higher_first=*/true);
  return set;
}

VulnerableSet aggregate_top_frequent(const std::vector<std::vector<int>>& per_model_ids,
                                     int k) {
  if (per_model_ids.empty())
    throw std::invalid_argument("aggregate_top_frequent: no per-model sets");
  std::unordered_map<int, int> counts;
  for (const auto& ids : per_model_ids)
    for (int id : ids) counts[id]++;
  std::vector<std::pair<int, double>> scored;
  scored.reserve(counts.size());
  for (const auto& [id, c] : counts) scored.emplace_back(id, static_cast<double>(c));
  VulnerableSet set;
  set.method = "aggregate_top_frequent";
  take_top_k(set, scored, k, /*higher_first=*/true);
  return set;
}

VulnerableSet outlier_baseline(const Corpus& corpus, int k) {
  int n = corpus.size();
  if (n < 2) throw std::invalid_argument("outlier_baseline: need at least two points");
  if (k < 1 || k > n) throw std::invalid_argument("outlier_baseline: k out of range");
  int m = std::min(10, n - 1);
  std::vector<std::pair<int, double>> scored;
  scored.reserve(static_cast<std::size_t>(n));
  std::vector<double> dists(static_cast<std::size_t>(n - 1));
  for (int i = 0; i < n; ++i) {
    std::size_t w = 0;
    const auto& fi = corpus.point(i).features;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const auto& fj = corpus.point(j).features;
      double acc = 0.0;
      for (std::size_t c = 0; c < fi.size(); ++c) {
        double d = fi[c] - fj[c];
        acc += d * d;
      }
      dists[w++] = acc;
    }
    std::nth_element(dists.begin(), dists.begin() + (m - 1), dists.end());
    double mean = 0.0;
    for (int t = 0; t < m; ++t) mean += std::sqrt(dists[static_cast<std::size_t>(t)]);
    mean /= static_cast<double>(m);
    scored.emplace_back(i, mean);
  }
  VulnerableSet set;
  set.method = "outlier_baseline";
  take_top_k(set, scored, k, /*higher_first=*/true);
  return set;
}

std::vector<std::vector<int>> overlap_matrix(const std::vector<VulnerableSet>& sets) {
  if (sets.empty()) throw std::invalid_argument("overlap_matrix: no sets");
  int k = sets.front().k;
  for (const auto& s : sets)
    if (s.k != k)
      throw std::invalid_argument("overlap_matrix: mismatched k between sets");
  std::size_t n = sets.size();
  std::vector<std::vector<int>> mat(n, std::vector<int>(n, 0));
  std::vector<std::unordered_set<int>> id_sets(n);
  for (std::size_t i = 0; i < n; ++i)
    id_sets[i] = std::unordered_set<int>(sets[i].ids.begin(), sets[i].ids.end());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      int c = 0;
      for (int id : sets[i].ids)
        if (id_sets[j].count(id)) ++c;
      mat[i][j] = c;
    }
  }
  return mat;
}

}  // namespace miaudit
