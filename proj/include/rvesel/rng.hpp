#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace rvesel {

/// Identifies one Monte Carlo draw: the per-sample random stream is a pure
/// function of (master_seed, sample_index), independent of thread schedule.
struct SampleSeed {
  std::uint64_t master_seed = 0;
  std::uint64_t sample_index = 0;

  bool operator==(const SampleSeed&) const = default;
};

/// Philox4x32-10 keyed block function (Salmon et al., SC'11).
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t kMul0 = 0xD2511F53u;
  constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
    const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

/// Counter-based random stream keyed by (master_seed, sample_index,
/// substream). Stateless apart from the block position, so identical draws
/// come out no matter which worker runs the sample.
class CounterRng {
 public:
  CounterRng(SampleSeed seed, std::uint32_t substream)
      : key_{static_cast<std::uint32_t>(seed.master_seed),
             static_cast<std::uint32_t>(seed.master_seed >> 32)},
        base_{0u, substream, static_cast<std::uint32_t>(seed.sample_index),
              static_cast<std::uint32_t>(seed.sample_index >> 32)} {}

  std::uint32_t next_u32() {
    if (pos_ == 4) {
      auto ctr = base_;
      ctr[0] = block_index_++;
      block_ = philox4x32(ctr, key_);
      pos_ = 0;
    }
    return block_[pos_++];
  }

  std::uint64_t next_u64() {
    const std::uint64_t lo = next_u32();
    const std::uint64_t hi = next_u32();
    return (hi << 32) | lo;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, bound), rejection-free when bound divides 2^32.
  std::uint32_t uniform_index(std::uint32_t bound) {
    if (bound == 0) throw std::invalid_argument("uniform_index: bound must be positive");
    const std::uint32_t limit = UINT32_MAX - UINT32_MAX % bound;
    for (;;) {
      const std::uint32_t v = next_u32();
      if (v < limit || limit == 0) return v % bound;
    }
  }

  /// Poisson count by inversion, chunked so exp(-mean) never underflows.
  long long poisson(double mean) {
    if (mean < 0.0) throw std::invalid_argument("poisson: mean must be >= 0");
    long long total = 0;
    while (mean > 0.0) {
      const double chunk = mean > 500.0 ? 500.0 : mean;
      mean -= chunk;
      const double threshold = std::exp(-chunk);
      double p = 1.0;
      long long k = -1;
      do {
        ++k;
        p *= uniform();
      } while (p > threshold);
      total += k;
    }
    return total;
  }

  /// Standard normal via Box-Muller (pairs cached).
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(angle);
    has_cached_ = true;
    return r * std::cos(angle);
  }

 private:
  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> base_;
  std::uint32_t block_index_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int pos_ = 4;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace rvesel
