#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace edgeseg {

/// 64-bit FNV-1a. Used for deriving per-parameter RNG streams and for config
/// digests.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// SplitMix64 generator. Deliberately not std::mt19937 + distributions: the
/// distributions are implementation-defined, and synthetic datasets and
/// parameter initialization must reproduce bit-identically across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_int(std::uint64_t n) {
    // Lemire-style rejection would be overkill; modulo bias is negligible for
    // the small ranges used here, but keep it exact anyway via rejection.
    std::uint64_t threshold = (~n + 1) % n;  // 2^64 mod n
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  /// Standard normal via Box-Muller (fixed, documented algorithm).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    // Guard against log(0).
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  /// Child generator for an independent named stream.
  Rng derive(std::string_view stream) const {
    return Rng(state_ ^ fnv1a64(stream) ^ 0x5851f42d4c957f2dull);
  }

  /// Child generator for an indexed stream.
  Rng derive(std::uint64_t index) const {
    Rng r(state_ ^ (0x9e3779b97f4a7c15ull * (index + 1)));
    r.next_u64();
    return r;
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace edgeseg
