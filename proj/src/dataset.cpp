#include "miaudit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "miaudit/io.hpp"
#include "miaudit/rng.hpp"

namespace miaudit {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

bool parses_as_double(const std::string& s) {
  if (s.empty()) return false;
  char* end = nullptr;
  std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

int integral_label(double v, const std::string& what) {
  if (!(v >= 0.0) || v != std::floor(v) || v > 1e9)
    throw std::runtime_error(what + ": label not a nonnegative integer");
  return static_cast<int>(v);
}

int nearest_center(const std::vector<double>& x,
                   const std::vector<std::vector<double>>& centers) {
  int best = 0;
  double best_d2 = 0.0;
  for (int c = 0; c < static_cast<int>(centers.size()); ++c) {
    double d2 = 0.0;
    const auto& ctr = centers[static_cast<std::size_t>(c)];
    for (std::size_t k = 0; k < x.size(); ++k) {
      double d = x[k] - ctr[k];
      d2 += d * d;
    }
    if (c == 0 || d2 < best_d2) {
      best = c;
      best_d2 = d2;
    }
  }
  return best;
}

void apply_label_noise(std::vector<DataPoint>& pts, int n_classes,
                       double fraction, Rng& rng) {
  int n = static_cast<int>(pts.size());
  int n_noisy = static_cast<int>(std::lround(fraction * n));
  std::vector<int> chosen = rng.sample_without_replacement(n, n_noisy);
  for (int idx : chosen) {
    auto& p = pts[static_cast<std::size_t>(idx)];
    // uniform over the other classes, so every noised point really moves
    int r = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_classes - 1)));
    p.label = r >= p.label ? r + 1 : r;
  }
}

std::vector<DataPoint> draw_cluster_points(
    int count, int first_id, const std::vector<std::vector<double>>& centers,
    double spread, Rng& rng) {
  int n_classes = static_cast<int>(centers.size());
  int dim = static_cast<int>(centers.front().size());
  std::vector<DataPoint> pts;
  pts.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    DataPoint p;
    p.id = first_id + i;
    p.features.resize(static_cast<std::size_t>(dim));
    const auto& ctr = centers[static_cast<std::size_t>(i % n_classes)];
    for (int k = 0; k < dim; ++k)
      p.features[static_cast<std::size_t>(k)] = ctr[static_cast<std::size_t>(k)] + spread * rng.normal();
    p.label = nearest_center(p.features, centers);
    pts.push_back(std::move(p));
  }
  return pts;
}

void check_synth_params(int n_points, int n_classes, int dim,
                        double cluster_spread, double label_noise_fraction) {
  if (n_points < 1) throw std::invalid_argument("n_points must be >= 1");
  if (n_classes < 2) throw std::invalid_argument("n_classes must be >= 2");
  if (dim < 1) throw std::invalid_argument("dim must be >= 1");
  if (!(cluster_spread >= 0.0))
    throw std::invalid_argument("cluster_spread must be >= 0");
  if (!(label_noise_fraction >= 0.0 && label_noise_fraction <= 1.0))
    throw std::invalid_argument("label_noise_fraction must be in [0, 1]");
}

}  // namespace

const DataPoint& Corpus::point(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("Corpus::point: bad id");
  return points[static_cast<std::size_t>(id)];
}

std::vector<std::vector<double>> make_cluster_centers(int n_classes, int dim,
                                                      std::uint64_t seed) {
  Rng rng(derive_seed(seed, "centers"));
  std::vector<std::vector<double>> centers;
  centers.reserve(static_cast<std::size_t>(n_classes));
  for (int c = 0; c < n_classes; ++c) {
    std::vector<double> v(static_cast<std::size_t>(dim));
    double norm = 0.0;
    do {
      norm = 0.0;
      for (auto& x : v) {
        x = rng.normal();
        norm += x * x;
      }
      norm = std::sqrt(norm);
    } while (norm < 1e-12);
    for (auto& x : v) x /= norm;
    centers.push_back(std::move(v));
  }
  return centers;
}

Corpus generate_synthetic(int n_points, int n_classes, int dim,
                          double cluster_spread, double label_noise_fraction,
                          std::uint64_t seed) {
  check_synth_params(n_points, n_classes, dim, cluster_spread, label_noise_fraction);
  auto centers = make_cluster_centers(n_classes, dim, seed);
  Rng point_rng(derive_seed(seed, "points"));
  Corpus corpus;
  corpus.n_classes = n_classes;
  corpus.dim = dim;
  corpus.points = draw_cluster_points(n_points, 0, centers, cluster_spread, point_rng);
  Rng noise_rng(derive_seed(seed, "noise"));
  apply_label_noise(corpus.points, n_classes, label_noise_fraction, noise_rng);
  return corpus;
}

std::vector<DataPoint> generate_reference_points(int count, int first_id,
                                                 int n_classes, int dim,
                                                 double cluster_spread,
                                                 double label_noise_fraction,
                                                 std::uint64_t seed) {
  check_synth_params(std::max(count, 1), n_classes, dim, cluster_spread,
                     label_noise_fraction);
  if (count < 1) throw std::invalid_argument("reference pool size must be >= 1");
  auto centers = make_cluster_centers(n_classes, dim, seed);
  Rng point_rng(derive_seed(seed, "reference_points"));
  auto pts = draw_cluster_points(count, first_id, centers, cluster_spread, point_rng);
  Rng noise_rng(derive_seed(seed, "reference_noise"));
  apply_label_noise(pts, n_classes, label_noise_fraction, noise_rng);
  return pts;
}

Corpus load_delimited(const std::string& path, int label_column) {
  auto lines = split_lines(read_text_file(path));
  Corpus corpus;
  int cols = -1;
  int label_col = -1;
  int max_label = -1;
  bool header_checked = false;
  for (std::size_t li = 0; li < lines.size(); ++li) {
    if (trim(lines[li]).empty()) continue;
    auto cells = split_csv_line(lines[li]);
    for (auto& c : cells) c = trim(c);
    std::string where = path + " line " + std::to_string(li + 1);
    if (!header_checked) {
      header_checked = true;
      bool numeric = std::all_of(cells.begin(), cells.end(), parses_as_double);
      if (!numeric) continue;  // header row
    }
    if (cols < 0) {
      cols = static_cast<int>(cells.size());
      if (cols < 2) throw std::runtime_error(where + ": need at least one feature and a label column");
      label_col = label_column < 0 ? cols - 1 : label_column;
      if (label_col < 0 || label_col >= cols)
        throw std::runtime_error(path + ": label column " + std::to_string(label_column) +
                                 " out of range for " + std::to_string(cols) + " columns");
    } else if (static_cast<int>(cells.size()) != cols) {
      throw std::runtime_error(where + ": ragged row, expected " + std::to_string(cols) +
                               " columns, got " + std::to_string(cells.size()));
    }
    DataPoint p;
    p.id = corpus.size();
    p.features.reserve(static_cast<std::size_t>(cols - 1));
    for (int c = 0; c < cols; ++c) {
      double v = parse_double_strict(cells[static_cast<std::size_t>(c)], where);
      if (c == label_col)
        p.label = integral_label(v, where);
      else
        p.features.push_back(v);
    }
    max_label = std::max(max_label, p.label);
    corpus.points.push_back(std::move(p));
  }
  if (corpus.points.empty()) throw std::runtime_error(path + ": no data rows");
  corpus.dim = cols - 1;
  corpus.n_classes = max_label + 1;
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::string out = "id,label";
  for (int k = 0; k < corpus.dim; ++k) out += ",f" + std::to_string(k);
  out += "\n";
  for (const auto& p : corpus.points) {
    out += std::to_string(p.id);
    out += ',';
    out += std::to_string(p.label);
    for (double f : p.features) {
      out += ',';
      append_g17(out, f);
    }
    out += "\n";
  }
  write_text_file(path, out);
}

Corpus load_corpus_snapshot(const std::string& path) {
  auto lines = split_lines(read_text_file(path));
  if (lines.empty() || lines[0].rfind("id,label", 0) != 0)
    throw std::runtime_error(path + ": not a corpus snapshot");
  int cols = static_cast<int>(split_csv_line(lines[0]).size());
  Corpus corpus;
  corpus.dim = cols - 2;
  int max_label = -1;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (trim(lines[li]).empty()) continue;
    auto cells = split_csv_line(lines[li]);
    std::string where = path + " line " + std::to_string(li + 1);
    if (static_cast<int>(cells.size()) != cols)
      throw std::runtime_error(where + ": ragged row");
    DataPoint p;
    p.id = static_cast<int>(parse_int_strict(cells[0], where));
    if (p.id != corpus.size())
      throw std::runtime_error(where + ": ids must be dense and ascending");
    p.label = integral_label(parse_double_strict(cells[1], where), where);
    max_label = std::max(max_label, p.label);
    p.features.reserve(static_cast<std::size_t>(corpus.dim));
    for (int c = 2; c < cols; ++c)
      p.features.push_back(parse_double_strict(cells[static_cast<std::size_t>(c)], where));
    corpus.points.push_back(std::move(p));
  }
  if (corpus.points.empty()) throw std::runtime_error(path + ": no data rows");
  corpus.n_classes = max_label + 1;
  return corpus;
}

SplitSizes compute_split_sizes(int n_points, const SplitRates& rates) {
  auto check_rate = [](double r, const char* name) {
    if (!(r > 0.0 && r < 1.0))
      throw std::invalid_argument(std::string(name) + " must be in (0, 1)");
  };
  check_rate(rates.target_shadow_rate, "target_shadow_rate");
  check_rate(rates.target_split_rate, "target_split_rate");
  check_rate(rates.shadow_split_rate, "shadow_split_rate");
  int n_target = static_cast<int>(std::floor(n_points * rates.target_shadow_rate));
  int n_shadow = n_points - n_target;
  SplitSizes s;
  s.target_train = static_cast<int>(std::floor(n_target * rates.target_split_rate));
  s.target_test = n_target - s.target_train;
  s.shadow_train = static_cast<int>(std::floor(n_shadow * rates.shadow_split_rate));
  s.shadow_test = n_shadow - s.shadow_train;
  if (s.target_train < 1 || s.target_test < 1 || s.shadow_train < 1 || s.shadow_test < 1)
    throw std::invalid_argument(
        "split sizes degenerate for n_points=" + std::to_string(n_points) +
        " (need every partition nonempty)");
  return s;
}

SplitPlan make_split(const Corpus& corpus, const SplitRates& rates,
                     int split_id, std::uint64_t seed) {
  SplitSizes sizes = compute_split_sizes(corpus.size(), rates);
  std::vector<int> ids(static_cast<std::size_t>(corpus.size()));
  for (int i = 0; i < corpus.size(); ++i) ids[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  rng.shuffle(ids);
  SplitPlan plan;
  plan.split_id = split_id;
  plan.n_points = corpus.size();
  auto take = [&ids](int from, int count) {
    std::vector<int> part(ids.begin() + from, ids.begin() + from + count);
    std::sort(part.begin(), part.end());
    return part;
  };
  int at = 0;
  plan.target_train_ids = take(at, sizes.target_train);
  at += sizes.target_train;
  plan.target_test_ids = take(at, sizes.target_test);
  at += sizes.target_test;
  plan.shadow_train_ids = take(at, sizes.shadow_train);
  at += sizes.shadow_train;
  plan.shadow_test_ids = take(at, sizes.shadow_test);
  return plan;
}

MembershipLedger tally_membership(const std::vector<SplitPlan>& plans) {
  if (plans.empty()) throw std::invalid_argument("tally_membership: no split plans");
  int n = plans.front().n_points;
  MembershipLedger ledger;
  ledger.split_num = static_cast<int>(plans.size());
  ledger.mt.assign(static_cast<std::size_t>(n), 0);
  ledger.nmt.assign(static_cast<std::size_t>(n), 0);
  for (const auto& plan : plans) {
    if (plan.n_points != n)
      throw std::invalid_argument("tally_membership: mismatched corpus sizes across split plans");
    for (int id : plan.target_train_ids) ledger.mt[static_cast<std::size_t>(id)]++;
    for (int id : plan.target_test_ids) ledger.nmt[static_cast<std::size_t>(id)]++;
  }
  return ledger;
}

}  // namespace miaudit
