#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace miaudit {

struct DataPoint {
  int id = 0;
  std::vector<double> features;
  int label = 0;
};

// Labeled point collection. Ids are dense 0..size()-1 and double as indices
// into points.
struct Corpus {
  std::vector<DataPoint> points;
  int n_classes = 0;
  int dim = 0;

  int size() const { return static_cast<int>(points.size()); }
  const DataPoint& point(int id) const;
};

// Fractions steering the four-way split. target_shadow_rate carves the
// corpus into target vs shadow halves; the split rates carve each half into
// train vs test.
struct SplitRates {
  double target_shadow_rate = 0.5;
  double target_split_rate = 0.5;
  double shadow_split_rate = 0.5;
};

struct SplitSizes {
  int target_train = 0;
  int target_test = 0;
  int shadow_train = 0;
  int shadow_test = 0;
};

// Floor at each stage; remainders flow into the matching test set. Throws if
// any of the four partitions would be empty.
SplitSizes compute_split_sizes(int n_points, const SplitRates& rates);

// One repetition of the four-way partition. The four id sets are disjoint,
// each sorted ascending, and together cover the corpus.
struct SplitPlan {
  int split_id = 0;
  int n_points = 0;
  std::vector<int> target_train_ids;
  std::vector<int> target_test_ids;
  std::vector<int> shadow_train_ids;
  std::vector<int> shadow_test_ids;
};

// Per point: MT = splits where the point sits in target train (member side),
// NMT = splits where it sits in target test.
struct MembershipLedger {
  int split_num = 0;
  std::vector<int> mt;
  std::vector<int> nmt;
};

// Gaussian clusters around random unit-norm centers. Labels equal the
// nearest-center assignment by construction, then a label_noise_fraction of
// points (rounded) is relabelled to a uniformly drawn different class. The
// noise knob controls how much a model can memorize, hence the achievable
// train/test accuracy gap.
Corpus generate_synthetic(int n_points, int n_classes, int dim,
                          double cluster_spread, double label_noise_fraction,
                          std::uint64_t seed);

// Center construction is exposed so tests can re-derive cluster assignments
// independently of the stored labels.
std::vector<std::vector<double>> make_cluster_centers(int n_classes, int dim,
                                                      std::uint64_t seed);

// Extra points from the same generative distribution (same centers for this
// seed, fresh draws). Ids start at first_id. Used as the disjoint reference
// pool for the neighbor-count vulnerability method.
std::vector<DataPoint> generate_reference_points(int count, int first_id,
                                                 int n_classes, int dim,
                                                 double cluster_spread,
                                                 double label_noise_fraction,
                                                 std::uint64_t seed);

// Comma-separated numeric table, one row per point. label_column picks the
// label (0-based; -1 means last column); every other column is a feature. A
// first row with any non-numeric cell is treated as a header. Labels must be
// integral and nonnegative; n_classes becomes max label + 1.
Corpus load_delimited(const std::string& path, int label_column);

// Snapshot schema: header "id,label,f0..f{d-1}", one row per point, doubles
// at 17 significant digits. load_corpus_snapshot inverts save_corpus exactly.
void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus_snapshot(const std::string& path);

SplitPlan make_split(const Corpus& corpus, const SplitRates& rates,
                     int split_id, std::uint64_t seed);

MembershipLedger tally_membership(const std::vector<SplitPlan>& plans);

}  // namespace miaudit
