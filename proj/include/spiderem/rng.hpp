// Deterministic, platform-stable random streams. All variate generation is
// hand-rolled on top of the raw mt19937_64 word stream so that identical
// (seed, stream_id) inputs produce identical draws on every platform.
#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>

namespace spiderem {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0,1), 53-bit resolution.
  double next_real() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform on (0,1]; always a valid log() argument.
  double next_real_open() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Unbiased uniform integer on [0, n) via rejection sampling.
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t umax = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t reject = (umax % n + 1) % n;  // 2^64 mod n
    std::uint64_t x = next_u64();
    if (reject != 0) {
      while (x > umax - reject) x = next_u64();
    }
    return x % n;
  }

  // Standard normal, Box-Muller cosine branch.
  double next_normal() {
    const double u = next_real_open();
    const double v = next_real();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(kTwoPi * v);
  }

 private:
  static constexpr double kTwoPi = 6.28318530717958647692;
  std::mt19937_64 engine_;
};

// Well-known stream ids so concurrent consumers of one master seed never
// share a stream.
namespace streams {
inline constexpr std::uint64_t kBatch = 1;
inline constexpr std::uint64_t kReset = 2;
inline constexpr std::uint64_t kEpochLength = 3;
inline constexpr std::uint64_t kWarmstart = 4;
inline constexpr std::uint64_t kInit = 5;
inline constexpr std::uint64_t kSynth = 6;
inline constexpr std::uint64_t kTermination = 7;
inline constexpr std::uint64_t kProbe = 8;
}  // namespace streams

// Independent reproducible stream per (master_seed, stream_id).
inline Rng split_rng(std::uint64_t master_seed, std::uint64_t stream_id) {
  std::uint64_t state = master_seed ^ (0xD1B54A32D192ED03ULL * (stream_id + 1));
  (void)detail::splitmix64(state);
  return Rng(detail::splitmix64(state));
}

// Order-sensitive combination of seed components into one 64-bit seed.
inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6A09E667F3BCC909ULL;
  for (std::uint64_t p : parts) {
    std::uint64_t s = p;
    h ^= detail::splitmix64(s) + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
  }
  std::uint64_t s = h;
  return detail::splitmix64(s);
}

}  // namespace spiderem
