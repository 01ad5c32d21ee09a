#pragma once

#include <cmath>
#include <cstdint>

namespace fenri {

// Deterministic PRNG used everywhere randomness matters for reproducibility.
// std::* distributions are implementation-defined, so draws are produced
// here from raw bits instead.

inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64(sm);
  }

  // xoshiro256**
  uint64_t next_u64() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    // Guard the log; uniform() can return exactly 0.
    u1 = u1 > 0 ? u1 : 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  /// Integer in [0, n).
  uint64_t below(uint64_t n) { return next_u64() % n; }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t s_[4];
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Counter-based gaussian pair: a pure function of (seed, counter), so
/// per-voxel noise is identical no matter how the voxel loop is scheduled.
inline void counter_gaussian_pair(uint64_t seed, uint64_t counter, double& g1,
                                  double& g2) {
  uint64_t st = seed ^ (counter * 0xd1342543de82ef95ull + 0x2545f4914f6cdd1dull);
  const uint64_t a = splitmix64(st);
  const uint64_t b = splitmix64(st);
  double u1 = double(a >> 11) * 0x1.0p-53;
  const double u2 = double(b >> 11) * 0x1.0p-53;
  u1 = u1 > 0 ? u1 : 0x1.0p-53;
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * 3.14159265358979323846 * u2;
  g1 = r * std::cos(theta);
  g2 = r * std::sin(theta);
}

}  // namespace fenri
