#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "har/error.hpp"

namespace har {

/// Deterministic random source. mt19937_64 raw output is fully specified by
/// the standard; the distributions below are hand-rolled because the std::
/// distribution objects are implementation-defined and would break byte
/// reproducibility across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw ContractError("Rng::below: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

  /// Standard normal via Box-Muller. One value per call; the twin draw is
  /// discarded so the consumption pattern stays position-independent.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// k distinct elements sampled without replacement, input order preserved
  /// in the result of the underlying shuffle draw.
  template <typename T>
  std::vector<T> sample(const std::vector<T>& pool, std::size_t k) {
    if (k > pool.size()) throw ContractError("Rng::sample: k exceeds pool size");
    std::vector<T> copy = pool;
    shuffle(copy);
    copy.resize(k);
    return copy;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace har
