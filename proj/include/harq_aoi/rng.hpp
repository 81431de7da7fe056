#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace harq_aoi {

// The engine is fully specified by the standard, so sample paths are
// reproducible across platforms. Distributions are built by hand below
// because std:: distributions are implementation-defined.
using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Always consumes exactly one draw, so p = 0 or 1 keeps streams aligned.
inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  auto i = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
  return i < n ? i : n - 1;
}

}  // namespace harq_aoi
