#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>

namespace uwauth {

/// SplitMix64 (Steele, Lea, Flood). 64 bits of state, fixed output on every
/// platform, cheap to split by hashing a stream id into a fresh seed.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  result_type operator()() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    return mix(z);
  }

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

/// Seed of an independent child stream. Used for per-trial and per-sample
/// seeds so that no two consumers share generator state.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream) noexcept {
  return SplitMix64::mix(SplitMix64::mix(parent ^ 0x6A09E667F3BCC909ULL) + SplitMix64::mix(stream + 0x9E3779B97F4A7C15ULL));
}

/// Uniform and Gaussian variates on top of SplitMix64. Gaussians use the
/// Box-Muller transform; the second value of each pair is cached.
class Random {
 public:
  explicit Random(std::uint64_t seed) noexcept : gen_(seed) {}

  std::uint64_t next_u64() noexcept { return gen_(); }

  /// Uniform in [0, 1).
  double uniform() noexcept { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform index in [0, n).
  std::uint64_t index(std::uint64_t n) noexcept { return n == 0 ? 0 : gen_() % n; }

  double normal() noexcept {
    if (spare_) {
      const double v = *spare_;
      spare_.reset();
      return v;
    }
    // u1 in (0, 1] keeps the logarithm finite.
    const double u1 = static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53;
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    return radius * std::cos(angle);
  }

  double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

 private:
  SplitMix64 gen_;
  std::optional<double> spare_;
};

}  // namespace uwauth
