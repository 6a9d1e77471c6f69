#pragma once

// Portable sampling on top of std::mt19937_64. The standard distributions are
// implementation-defined; these are not, so seeded runs reproduce bit-exactly
// across standard libraries.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>

namespace sgf {

using Rng = std::mt19937_64;

// Uniform on [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// Uniform integer in [0, n) by rejection (no modulo bias).
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = (~std::uint64_t{0} / n) * n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

// Box-Muller; one draw per call, the partner value is discarded.
inline double standard_normal(Rng& rng) {
  double u1;
  do {
    u1 = uniform01(rng);
  } while (u1 <= 0.0);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline double exponential(Rng& rng) {
  double u;
  do {
    u = uniform01(rng);
  } while (u <= 0.0);
  return -std::log(u);
}

// Inverse-CDF draw from unnormalised nonnegative weights.
inline int categorical(Rng& rng, std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = uniform01(rng) * total;
  int last_positive = -1;
  for (size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    last_positive = static_cast<int>(i);
    if (u < weights[i]) return static_cast<int>(i);
    u -= weights[i];
  }
  return last_positive;
}

}  // namespace sgf
