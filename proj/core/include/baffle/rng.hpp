#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace baffle {

/// Deterministic 64-bit PRNG (SplitMix64). Used everywhere instead of
/// <random> engines/distributions so that streams are reproducible
/// bit-for-bit across standard library implementations.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1), 53-bit resolution.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n), n >= 1. Lemire's multiply-shift rejection.
  std::uint64_t next_below(std::uint64_t n) {
    if (n <= 1) return 0;
    while (true) {
      std::uint64_t x = next_u64();
      __uint128_t m = static_cast<__uint128_t>(x) * n;
      auto lo = static_cast<std::uint64_t>(m);
      if (lo >= n || lo >= static_cast<std::uint64_t>(-static_cast<std::int64_t>(n)) % n) {
        return static_cast<std::uint64_t>(m >> 64);
      }
    }
  }

  /// Standard normal via Box-Muller. Draws two uniforms per call.
  double next_gaussian() {
    double u1 = next_double();
    double u2 = next_double();
    // Guard log(0).
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t state_;
};

/// One SplitMix64 mixing step. Stateless finalizer used for seed derivation.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Per-episode (or per-restart, per-stage) stream derivation:
/// stream seed = mix64(master XOR index). Independent streams make episode
/// results order- and thread-count-independent.
inline SplitMix64 derive_stream(std::uint64_t master, std::uint64_t index) {
  return SplitMix64(mix64(master ^ index));
}

}  // namespace baffle
