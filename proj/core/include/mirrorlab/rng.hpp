#pragma once

#include <cstdint>
#include <limits>

namespace mirrorlab {

/// 64-bit avalanche mix (the SplitMix64 finalizer). Bijective on uint64.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

/**
 * Counter-based generator. Output number n (0-based) of the stream with key k
 * is mix64(k + (n + 1) * 0x9E3779B97F4A7C15), computed modulo 2^64. This is
 * SplitMix64 seeded with k, so any implementation reproduces it bit for bit.
 *
 * Derived draws are equally fixed:
 *   uniform01()        = (next() >> 11) * 2^-53
 *   bernoulli(p)       = uniform01() < p           (always one draw)
 *   uniform_index(n)   = Lemire multiply-shift with rejection of the
 *                        low word below (2^64 - n) mod n
 */
class CounterRng {
 public:
  using result_type = std::uint64_t;

  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  constexpr explicit CounterRng(std::uint64_t key, std::uint64_t counter = 0) noexcept
      : key_(key), counter_(counter) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  constexpr result_type operator()() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * kGamma);
  }

  double uniform01() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  bool bernoulli(double p) noexcept { return uniform01() < p; }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n) noexcept;

  constexpr std::uint64_t key() const noexcept { return key_; }
  constexpr std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

/// Seed of trial `trial_id` under `master_seed`:
/// mix64(mix64(master_seed ^ (trial_id * 0xD1B54A32D192ED03))).
/// A bijection in trial_id for fixed master_seed, so streams never collide.
constexpr std::uint64_t derive_trial_seed(std::uint64_t master_seed,
                                          std::uint64_t trial_id) noexcept {
  return mix64(mix64(master_seed ^ (trial_id * 0xD1B54A32D192ED03ULL)));
}

}  // namespace mirrorlab
