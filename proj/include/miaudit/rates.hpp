#pragma once

#include <vector>

#include "miaudit/attacks.hpp"
#include "miaudit/dataset.hpp"

namespace miaudit {

// Exact ratio of small integers. Rate aggregation happens in integer
// arithmetic and divides once at the end, so the doubles in the artifacts are
// the correctly rounded values of these fractions.
struct Fraction {
  long long num = 0;
  long long den = 1;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

// Per-point exposure rates. mer/nmer list the per-split rates in ascending
// split order, restricted to the splits where the point was on the matching
// side. amer/anmer exist only when the point appeared on that side at least
// once (mt, nmt from the ledger).
struct PointRates {
  int point_id = 0;
  int mt = 0;
  int nmt = 0;
  std::vector<double> mer;
  std::vector<double> nmer;
  bool has_amer = false;
  bool has_anmer = false;
  double amer = 0.0;
  double anmer = 0.0;
  Fraction amer_frac{0, 1};
  Fraction anmer_frac{0, 1};
  bool has_exposure_gap = false;
  double exposure_gap = 0.0;  // amer - anmer
};

// Per-attack inference rates. mir/nmir hold (point_id, rate) pairs over the
// eligible points, ascending by id; amir/anmir are their unweighted means.
struct AttackRates {
  int attack_id = 0;
  std::vector<std::pair<int, double>> mir;
  std::vector<std::pair<int, double>> nmir;
  double amir = 0.0;
  double anmir = 0.0;
  Fraction amir_frac{0, 1};
  Fraction anmir_frac{0, 1};
  double avg_accuracy = 0.0;
  Fraction avg_accuracy_frac{0, 1};
};

// counted_attack_ids selects the attacks that enter the per-point rates
// (the gap baseline sits outside by default; pass it in to count it). The
// record tensor must be complete: for every (split, point) cell it covers,
// every counted attack appears exactly once, and membership bits must agree
// with the ledger.
std::vector<PointRates> compute_point_rates(const std::vector<InferenceRecord>& records,
                                            const MembershipLedger& ledger,
                                            const std::vector<int>& counted_attack_ids);

// Rates for every attack id present in the records, gap baseline included.
std::vector<AttackRates> compute_attack_rates(const std::vector<InferenceRecord>& records,
                                              const MembershipLedger& ledger);

struct RateCurveEntry {
  int point_id = 0;
  double value = 0.0;
  int mt = 0;
  int nmt = 0;
};

// Descending-value curves over the eligible points (ties toward the lower
// id): amer, anmer, and the exposure gap amer - anmer where both exist.
struct RateCurves {
  std::vector<RateCurveEntry> amer;
  std::vector<RateCurveEntry> anmer;
  std::vector<RateCurveEntry> exposure_gap;
};

RateCurves sorted_rate_curves(const std::vector<PointRates>& point_rates);

}  // namespace miaudit
