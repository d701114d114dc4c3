#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "miaudit/dataset.hpp"
#include "miaudit/model.hpp"
#include "miaudit/rates.hpp"

namespace miaudit {

// Ranked set of candidate vulnerable points produced by one method in one
// repetition. ids and scores align; rank 1 is the most vulnerable.
struct VulnerableSet {
  std::string method;
  int repetition = 0;
  int k = 0;
  std::vector<int> ids;
  std::vector<double> scores;
};

enum class RateKind { amer, anmer };

// Highest-rate points; ties go to the lower point id. Only points that
// appeared on the matching membership side are eligible; fewer than k such
// points is an error.
VulnerableSet top_k_by_rate(const std::vector<PointRates>& point_rates,
                            RateKind kind, int k);

// Trains n_reference_models on bootstrap resamples of the reference pool,
// concatenates their probability outputs into one combination feature per
// point, and counts, for every target point, the reference points closer
// than neighbor_threshold in cosine distance. Fewer neighbors means more
// isolated, hence more vulnerable: the count cutoff rises from the minimum
// until at least k points qualify, then the list is truncated to k with ties
// toward the lower id. target_ids and reference_ids must be disjoint and the
// pool nonempty.
VulnerableSet neighbors_based(const Corpus& corpus,
                              const std::vector<int>& target_ids,
                              const std::vector<int>& reference_ids,
                              const TrainSpec& train_spec,
                              int n_reference_models, double neighbor_threshold,
                              int k, std::uint64_t seed);

// Exact K-nearest-neighbor Shapley values of the training points for one
// model, summed over the test points. For each test point the training
// points are ordered by ascending Euclidean distance between model outputs
// (ties toward the lower index); the farthest point gets match/N and values
// propagate toward the nearest with differences scaled by min(K, i)/(K * i).
std::vector<double> knn_shapley(const std::vector<std::vector<double>>& train_outputs,
                                const std::vector<int>& train_labels,
                                const std::vector<std::vector<double>>& test_outputs,
                                const std::vector<int>& test_labels, int k_neighbors);

// Histogram estimate of P(member | value bin): n_bins equal-width bins over
// the pooled shadow range, score = member density / (member + nonmember
// density), empty bins fall back to 0.5, out-of-range target values clamp to
// the edge bins. With per_class, separate histograms per label; every class
// seen in the targets then needs shadow values on both membership sides.
std::vector<double> privacy_risk_scores(const std::vector<double>& shadow_member_values,
                                        const std::vector<int>& shadow_member_labels,
                                        const std::vector<double>& shadow_nonmember_values,
                                        const std::vector<int>& shadow_nonmember_labels,
                                        const std::vector<double>& target_values,
                                        const std::vector<int>& target_labels,
                                        bool per_class, int n_bins);

// Generic top-k over externally computed scores, descending with ties toward
// the lower id. ids and scores align; fewer than k candidates is an error.
VulnerableSet top_k_scored(const std::string& method, const std::vector<int>& ids,
                           const std::vector<double>& scores, int k);

// Appearance counts across per-model top lists; the k most frequent ids win,
// ties toward the lower id.
VulnerableSet aggregate_top_frequent(const std::vector<std::vector<int>>& per_model_ids,
                                     int k);

// Input-space outlier score: mean Euclidean distance to the 10 nearest other
// points (fewer when the corpus is smaller). Largest mean distance ranks
// first. No model involved, so the set is invariant across repetitions.
VulnerableSet outlier_baseline(const Corpus& corpus, int k);

// Pairwise intersection sizes; sets must share one k. Row order follows the
// input order.
std::vector<std::vector<int>> overlap_matrix(const std::vector<VulnerableSet>& sets);

}  // namespace miaudit
