#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace sag {

namespace detail {

// SplitMix64 finalizer. Full-avalanche mix of a 64-bit word.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t combine64(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ (mix64(b) + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2)));
}

}  // namespace detail

/// Counter-based pseudo-random stream. The i-th output is a pure function of
/// (key, i), so draws do not depend on how other streams are consumed, and
/// child streams are independent of the parent's position. Not
/// cryptographic; meant for reproducible experiments.
class SplitStream {
 public:
  explicit SplitStream(std::uint64_t seed) : key_(detail::mix64(seed)) {}

  /// Derive an independent sub-stream for the given lane.
  [[nodiscard]] SplitStream child(std::uint64_t lane) const {
    SplitStream s(0);
    s.key_ = detail::combine64(key_, lane);
    s.counter_ = 0;
    return s;
  }

  std::uint64_t next_u64() { return detail::mix64(key_ + 0x632be59bd9b4e019ull * ++counter_); }

  /// Uniform in [0, 1) with 53 random bits.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (one value per pair of uniforms).
  double next_normal() {
    const double u1 = 1.0 - next_unit();  // (0, 1], keeps log finite
    const double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, bound) by rejection; bound must be > 0.
  std::uint64_t next_below(std::uint64_t bound) {
    const std::uint64_t limit = bound * (~0ull / bound);
    std::uint64_t r;
    do {
      r = next_u64();
    } while (r >= limit);
    return r % bound;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace sag
