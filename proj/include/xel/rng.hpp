#pragma once

#include <cstdint>

namespace xel {

/// SplitMix64 finalizer. Constants from Steele, Lea & Flood (2014).
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

/// Counter-based draw: the i-th value of the stream keyed by `key`.
constexpr std::uint64_t stream_at(std::uint64_t key, std::uint64_t index) {
  return mix64(key + (index + 1) * kGoldenGamma);
}

/// Maps 64 random bits to the open interval (0, 1).
constexpr double open_unit(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/// Sequential SplitMix64 generator. Platform independent, unlike the
/// standard distributions.
class Rng {
 public:
  explicit constexpr Rng(std::uint64_t seed) : state_(seed) {}

  constexpr std::uint64_t next() {
    state_ += kGoldenGamma;
    return mix64(state_);
  }

  /// Uniform in (0, 1).
  constexpr double uniform() { return open_unit(next()); }

  /// Uniform in (lo, hi).
  constexpr double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Uses rejection to avoid modulo bias.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v = next();
    while (v >= limit) v = next();
    return v % n;
  }

  /// Independent child stream; `salt` distinguishes siblings.
  constexpr Rng fork(std::uint64_t salt) { return Rng(mix64(next() ^ mix64(salt))); }

 private:
  std::uint64_t state_;
};

}  // namespace xel
