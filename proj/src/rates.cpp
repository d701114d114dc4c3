#include "miaudit/rates.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <unordered_map>

namespace miaudit {

namespace {

using i128 = __int128;

i128 gcd128(i128 a, i128 b) {
  if (a < 0) a = -a;
  if (b < 0) b = -b;
  while (b != 0) {
    i128 t = a % b;
    a = b;
    b = t;
  }
  return a;
}

// exact sum of small fractions; reduces after every step to keep magnitudes
// far from the 128-bit range
struct FractionAccum {
  i128 num = 0;
  i128 den = 1;

  void add(long long n, long long d) {
    num = num * d + static_cast<i128>(n) * den;
    den = den * d;
    i128 g = gcd128(num, den);
    if (g > 1) {
      num /= g;
      den /= g;
    }
  }

  Fraction divided_by(long long extra) const {
    i128 n = num;
    i128 d = den * extra;
    i128 g = gcd128(n, d);
    if (g > 1) {
      n /= g;
      d /= g;
    }
    constexpr i128 kMax = std::numeric_limits<long long>::max();
    if (n > kMax || d > kMax)
      throw std::overflow_error("rate fraction exceeds 64-bit range");
    return Fraction{static_cast<long long>(n), static_cast<long long>(d)};
  }
};

Fraction make_fraction(long long num, long long den) {
  FractionAccum acc;
  acc.add(num, den);
  return acc.divided_by(1);
}

}  // namespace

std::vector<PointRates> compute_point_rates(const std::vector<InferenceRecord>& records,
                                            const MembershipLedger& ledger,
                                            const std::vector<int>& counted_attack_ids) {
  if (counted_attack_ids.empty())
    throw std::invalid_argument("compute_point_rates: empty counted attack set");
  int n_points = static_cast<int>(ledger.mt.size());
  int split_num = ledger.split_num;
  int n = static_cast<int>(counted_attack_ids.size());

  std::unordered_map<int, int> attack_slot;
  attack_slot.reserve(counted_attack_ids.size());
  for (int i = 0; i < n; ++i)
    if (!attack_slot.emplace(counted_attack_ids[static_cast<std::size_t>(i)], i).second)
      throw std::invalid_argument("compute_point_rates: duplicate counted attack id");

  std::size_t cells = static_cast<std::size_t>(n_points) * static_cast<std::size_t>(split_num);
  std::vector<signed char> b_bit(cells, -1);
  std::vector<int> correct(cells, 0);
  std::vector<std::uint8_t> seen(cells * static_cast<std::size_t>(n), 0);

  for (const auto& r : records) {
    auto slot = attack_slot.find(r.attack_id);
    if (slot == attack_slot.end()) continue;
    if (r.point_id < 0 || r.point_id >= n_points)
      throw std::invalid_argument("compute_point_rates: point id out of range");
    if (r.split_id < 0 || r.split_id >= split_num)
      throw std::invalid_argument("compute_point_rates: split id out of range");
    std::size_t cell = static_cast<std::size_t>(r.point_id) * split_num + r.split_id;
    if (b_bit[cell] < 0)
      b_bit[cell] = static_cast<signed char>(r.b);
    else if (b_bit[cell] != static_cast<signed char>(r.b))
      throw std::invalid_argument("compute_point_rates: inconsistent membership bit for point " +
                                  std::to_string(r.point_id) + " in split " +
                                  std::to_string(r.split_id));
    std::size_t seen_idx = cell * static_cast<std::size_t>(n) + static_cast<std::size_t>(slot->second);
    if (seen[seen_idx])
      throw std::invalid_argument("compute_point_rates: duplicate record for point " +
                                  std::to_string(r.point_id) + ", split " +
                                  std::to_string(r.split_id) + ", attack " +
                                  std::to_string(r.attack_id));
    seen[seen_idx] = 1;
    if (r.b == r.b_pred) correct[cell]++;
  }

  std::vector<PointRates> out;
  out.reserve(static_cast<std::size_t>(n_points));
  for (int p = 0; p < n_points; ++p) {
    PointRates pr;
    pr.point_id = p;
    pr.mt = ledger.mt[static_cast<std::size_t>(p)];
    pr.nmt = ledger.nmt[static_cast<std::size_t>(p)];
    long long member_correct = 0, nonmember_correct = 0;
    int member_splits = 0, nonmember_splits = 0;
    for (int j = 0; j < split_num; ++j) {
      std::size_t cell = static_cast<std::size_t>(p) * split_num + j;
      if (b_bit[cell] < 0) continue;
      int present = 0;
      for (int a = 0; a < n; ++a)
        present += seen[cell * static_cast<std::size_t>(n) + static_cast<std::size_t>(a)];
      if (present != n)
        throw std::invalid_argument("compute_point_rates: incomplete record tensor for point " +
                                    std::to_string(p) + " in split " + std::to_string(j));
      double rate = static_cast<double>(correct[cell]) / static_cast<double>(n);
      if (b_bit[cell] == 1) {
        pr.mer.push_back(rate);
        member_correct += correct[cell];
        ++member_splits;
      } else {
        pr.nmer.push_back(rate);
        nonmember_correct += correct[cell];
        ++nonmember_splits;
      }
    }
    if (member_splits != pr.mt || nonmember_splits != pr.nmt)
      throw std::invalid_argument("compute_point_rates: records disagree with membership ledger for point " +
                                  std::to_string(p));
    if (pr.mt > 0) {
      pr.has_amer = true;
      pr.amer_frac = make_fraction(member_correct, static_cast<long long>(n) * pr.mt);
      pr.amer = pr.amer_frac.value();
    }
    if (pr.nmt > 0) {
      pr.has_anmer = true;
      pr.anmer_frac = make_fraction(nonmember_correct, static_cast<long long>(n) * pr.nmt);
      pr.anmer = pr.anmer_frac.value();
    }
    if (pr.has_amer && pr.has_anmer) {
      pr.has_exposure_gap = true;
      pr.exposure_gap = pr.amer - pr.anmer;
    }
    out.push_back(std::move(pr));
  }
  return out;
}

std::vector<AttackRates> compute_attack_rates(const std::vector<InferenceRecord>& records,
                                              const MembershipLedger& ledger) {
  if (records.empty()) throw std::invalid_argument("compute_attack_rates: no records");
  int n_points = static_cast<int>(ledger.mt.size());
  int split_num = ledger.split_num;

  std::vector<int> attack_ids;
  {
    std::unordered_map<int, bool> seen_ids;
    for (const auto& r : records)
      if (seen_ids.emplace(r.attack_id, true).second) attack_ids.push_back(r.attack_id);
    std::sort(attack_ids.begin(), attack_ids.end());
  }
  std::unordered_map<int, int> attack_slot;
  for (std::size_t i = 0; i < attack_ids.size(); ++i) attack_slot[attack_ids[i]] = static_cast<int>(i);
  std::size_t n_attacks = attack_ids.size();

  // per (attack, point) membership tallies and per (attack, split) accuracy tallies
  std::vector<int> m_corr(n_attacks * n_points, 0), m_seen(n_attacks * n_points, 0);
  std::vector<int> nm_corr(n_attacks * n_points, 0), nm_seen(n_attacks * n_points, 0);
  std::vector<long long> split_corr(n_attacks * static_cast<std::size_t>(split_num), 0);
  std::vector<long long> split_total(n_attacks * static_cast<std::size_t>(split_num), 0);

  for (const auto& r : records) {
    if (r.point_id < 0 || r.point_id >= n_points)
      throw std::invalid_argument("compute_attack_rates: point id out of range");
    if (r.split_id < 0 || r.split_id >= split_num)
      throw std::invalid_argument("compute_attack_rates: split id out of range");
    std::size_t a = static_cast<std::size_t>(attack_slot.at(r.attack_id));
    std::size_t ap = a * static_cast<std::size_t>(n_points) + static_cast<std::size_t>(r.point_id);
    std::size_t as = a * static_cast<std::size_t>(split_num) + static_cast<std::size_t>(r.split_id);
    bool good = r.b == r.b_pred;
    if (r.b == 1) {
      m_seen[ap]++;
      if (good) m_corr[ap]++;
    } else {
      nm_seen[ap]++;
      if (good) nm_corr[ap]++;
    }
    split_total[as]++;
    if (good) split_corr[as]++;
  }

  std::vector<AttackRates> out;
  out.reserve(n_attacks);
  for (std::size_t a = 0; a < n_attacks; ++a) {
    AttackRates ar;
    ar.attack_id = attack_ids[a];
    FractionAccum mir_sum, nmir_sum;
    long long mn = 0, nmn = 0;
    for (int p = 0; p < n_points; ++p) {
      std::size_t ap = a * static_cast<std::size_t>(n_points) + static_cast<std::size_t>(p);
      int mt = ledger.mt[static_cast<std::size_t>(p)];
      int nmt = ledger.nmt[static_cast<std::size_t>(p)];
      if (m_seen[ap] != mt || nm_seen[ap] != nmt)
        throw std::invalid_argument("compute_attack_rates: records for attack " +
                                    std::to_string(ar.attack_id) +
                                    " disagree with membership ledger for point " +
                                    std::to_string(p));
      if (mt > 0) {
        ar.mir.emplace_back(p, make_fraction(m_corr[ap], mt).value());
        mir_sum.add(m_corr[ap], mt);
        ++mn;
      }
      if (nmt > 0) {
        ar.nmir.emplace_back(p, make_fraction(nm_corr[ap], nmt).value());
        nmir_sum.add(nm_corr[ap], nmt);
        ++nmn;
      }
    }
    if (mn == 0 || nmn == 0)
      throw std::invalid_argument("compute_attack_rates: no eligible points on one membership side");
    ar.amir_frac = mir_sum.divided_by(mn);
    ar.anmir_frac = nmir_sum.divided_by(nmn);
    ar.amir = ar.amir_frac.value();
    ar.anmir = ar.anmir_frac.value();

    FractionAccum acc_sum;
    for (int j = 0; j < split_num; ++j) {
      std::size_t as = a * static_cast<std::size_t>(split_num) + static_cast<std::size_t>(j);
      if (split_total[as] == 0)
        throw std::invalid_argument("compute_attack_rates: attack " + std::to_string(ar.attack_id) +
                                    " has no records in split " + std::to_string(j));
      acc_sum.add(split_corr[as], split_total[as]);
    }
    ar.avg_accuracy_frac = acc_sum.divided_by(split_num);
    ar.avg_accuracy = ar.avg_accuracy_frac.value();
    out.push_back(std::move(ar));
  }
  return out;
}

RateCurves sorted_rate_curves(const std::vector<PointRates>& point_rates) {
  RateCurves curves;
  auto fill = [&point_rates](std::vector<RateCurveEntry>& dst, auto has, auto get) {
    for (const auto& pr : point_rates) {
      if (!has(pr)) continue;
      dst.push_back(RateCurveEntry{pr.point_id, get(pr), pr.mt, pr.nmt});
    }
    std::sort(dst.begin(), dst.end(), [](const RateCurveEntry& a, const RateCurveEntry& b) {
      if (a.value != b.value) return a.value > b.value;
      return a.point_id < b.point_id;
    });
  };
  fill(curves.amer, [](const PointRates& p) { return p.has_amer; },
       [](const PointRates& p) { return p.amer; });
  fill(curves.anmer, [](const PointRates& p) { return p.has_anmer; },
       [](const PointRates& p) { return p.anmer; });
  fill(curves.exposure_gap, [](const PointRates& p) { return p.has_exposure_gap; },
       [](const PointRates& p) { return p.exposure_gap; });
  return curves;
}

}  // namespace miaudit
