#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace forest::num {

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Child seed for stream `index` of `master`; used for per-plot and per-seed fan-out.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept;

/// Counter-based generator: draw n is mix64(key + n * golden). Identical
/// (seed, stream) pairs reproduce identical sequences on every platform.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept;

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Standard normal via Box-Muller (one value per two draws).
  double normal() noexcept;
  /// Normal(0, sigma) resampled until |x| <= bound * sigma.
  double truncated_normal(double sigma, double bound = 2.0) noexcept;
  /// Uniform integer in [0, n). Unbiased.
  std::size_t below(std::size_t n) noexcept;

  template <typename T>
  void shuffle(std::vector<T>& v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace forest::num
