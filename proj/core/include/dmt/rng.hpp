#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dmt::rng {

// SplitMix64 finalizer. Used to derive well-mixed keys for named streams so
// that every draw is a pure function of (seed, salt, index).
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t mix(uint64_t seed, uint64_t salt) {
  return splitmix64(splitmix64(seed) ^ (0x9e3779b97f4a7c15ULL * (salt + 1)));
}

// Map 64 random bits to [0,1) with 53-bit resolution.
inline double to_unit(uint64_t x) { return double(x >> 11) * 0x1.0p-53; }

// Deterministic random stream. mt19937_64 output is pinned by the standard
// and all value mappings below are explicit, so a given seed produces the
// same sequence on every platform. std::*_distribution is avoided on
// purpose (its mapping is implementation-defined).
class Stream {
 public:
  explicit Stream(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // [0,1)
  double uniform() { return to_unit(eng_()); }

  // open interval draw for logit transforms; clamped away from {0,1}
  double uniform_open(double eps = 1e-7) {
    double u = uniform();
    if (u < eps) return eps;
    if (u > 1.0 - eps) return 1.0 - eps;
    return u;
  }

  // uniform integer in [0, n); modulo bias is negligible for desk-scale n
  int below(int n) { return int(eng_() % uint64_t(n)); }

  double range(double lo, double hi) { return lo + (hi - lo) * uniform(); }

 private:
  std::mt19937_64 eng_;
};

}  // namespace dmt::rng
