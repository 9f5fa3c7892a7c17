#pragma once

// Thin sampling helpers over std::mt19937_64.  Distribution objects are
// constructed per call so a draw is a pure function of the engine state,
// which keeps runs bit-reproducible for a fixed seed.

#include <algorithm>
#include <cmath>
#include <random>

namespace bcd {

using Rng = std::mt19937_64;

inline double draw_uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double draw_normal(Rng& rng, double mean = 0.0, double sd = 1.0) {
  return std::normal_distribution<double>(mean, sd)(rng);
}

inline int draw_int(Rng& rng, int lo, int hi) {  // inclusive bounds
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// Standard Gumbel via inverse transform, clamped away from the endpoints so
// the double-log never produces an infinity.
inline double draw_gumbel(Rng& rng) {
  double u = draw_uniform(rng);
  u = std::clamp(u, 1e-300, 1.0 - 1e-16);
  return -std::log(-std::log(u));
}

// Derive an independent stream for a sub-task without disturbing `seed`'s
// other consumers.  The mixing constant is arbitrary but fixed.
inline Rng substream(std::uint64_t seed, std::uint64_t stream) {
  return Rng(seed * 0x9E3779B97F4A7C15ULL + stream * 0xD1B54A32D192ED03ULL + 1ULL);
}

}  // namespace bcd
