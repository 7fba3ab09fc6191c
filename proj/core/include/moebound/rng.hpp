#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace moebound {

// Counter-based splittable PRNG (splitmix64 core). Every random draw in the
// library flows from one explicit 64-bit seed, and independent stages pull
// from split() children, so a whole run is a pure function of its seed. We
// do not use <random> distributions anywhere: their output is not pinned
// across standard library implementations, and run artifacts here are
// expected to be byte-identical across rebuilds.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  // Child generator for an independent stream. Does not advance the parent.
  Rng split(std::uint64_t stream) const {
    return Rng(mix(state_ + kGamma * (stream + 1)) ^ 0x5851f42d4c957f2dULL);
  }

  std::uint64_t next_u64() {
    state_ += kGamma;
    return mix(state_);
  }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller. Always consumes exactly two uniforms and
  // never caches a spare, so the draw count per call is fixed.
  double gaussian() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Uniform index in [0, n). Multiply-shift map; bias is O(n / 2^64).
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(
        (static_cast<__uint128_t>(next_u64()) * static_cast<__uint128_t>(n)) >> 64);
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t state_;
};

}  // namespace moebound
