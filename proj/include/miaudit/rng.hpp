#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace miaudit {

// SplitMix64 finalizer, used both as a mixing step for seed derivation and to
// expand short seeds.
std::uint64_t splitmix64(std::uint64_t x);

// FNV-1a over raw bytes. Stable across platforms and standard libraries,
// unlike std::hash.
std::uint64_t fnv1a64(std::string_view bytes);

// Child seed for a pipeline stage. Every stochastic stage derives its own
// seed from (master, tag, a, b) so stages can run in any order or in
// parallel without perturbing each other.
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                          std::uint64_t a = 0, std::uint64_t b = 0);

// Deterministic random source. The engine is mt19937_64 (fully specified by
// the standard); the distributions are written out by hand because the std
// <random> distribution objects are implementation-defined and would break
// byte-identical reruns across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Unbiased draw in [0, bound), bound > 0. Rejection sampling on the top
  // of the range.
  std::uint64_t below(std::uint64_t bound);

  // [0, 1) with 53 random bits.
  double uniform01();

  double uniform(double lo, double hi);

  // Standard normal via Box-Muller; keeps the spare value.
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct values out of 0..n-1, in draw order.
  std::vector<int> sample_without_replacement(int n, int k);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace miaudit
