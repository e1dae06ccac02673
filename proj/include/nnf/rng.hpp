#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace nnf {

/// Deterministic 64-bit PRNG (xoshiro256**), seeded via splitmix64.
/// Self-contained so that streams are reproducible across standard-library
/// implementations; <random> distributions are not portable.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (auto& s : state_) s = splitmix64(x);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1).
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Uniform integer in [0, n). Unbiased via rejection.
  uint64_t next_below(uint64_t n) {
    const uint64_t threshold = (0 - n) % n;
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  /// Uniform integer in [lo, hi] inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    return lo + int64_t(next_below(uint64_t(hi - lo + 1)));
  }

  /// Standard normal via Box-Muller (one value per call, no caching,
  /// so streams stay position-independent).
  double normal() {
    double u1 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  /// Normal(0, sigma) resampled until |x| <= 2*sigma.
  double truncated_normal(double sigma) {
    for (;;) {
      const double x = sigma * normal();
      if (std::abs(x) <= 2.0 * sigma) return x;
    }
  }

  static uint64_t splitmix64(uint64_t& x) {
    uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  static uint64_t rotl(uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

  uint64_t state_[4];
};

/// Derives an independent stream seed from a root seed and a stream name,
/// so init/shuffle/dropout/data randomness can be perturbed independently.
inline uint64_t substream_seed(uint64_t root_seed, std::string_view name) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) {
    h ^= uint64_t(uint8_t(c));
    h *= 0x100000001b3ULL;
  }
  uint64_t x = root_seed ^ h;
  return Rng::splitmix64(x);
}

/// Seeded Fisher-Yates shuffle of an index permutation.
inline std::vector<size_t> shuffled_indices(size_t n, Rng& rng) {
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  for (size_t i = n; i > 1; --i) {
    const size_t j = size_t(rng.next_below(i));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

}  // namespace nnf
