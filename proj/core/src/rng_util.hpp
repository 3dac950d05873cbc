#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace crseg::rngutil {

// Draws built directly on mt19937_64 output (which the standard pins down),
// so seeded artifacts reproduce across standard-library implementations.

inline double unit(std::mt19937_64& g) {  // [0, 1)
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline std::int64_t below(std::mt19937_64& g, std::int64_t n) {  // [0, n), unbiased
  const std::uint64_t un = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  std::uint64_t v = g();
  while (v >= limit) v = g();
  return static_cast<std::int64_t>(v % un);
}

inline double normal(std::mt19937_64& g) {  // Box-Muller, one value per call
  const double u1 = 1.0 - unit(g);  // (0, 1]
  const double u2 = unit(g);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace crseg::rngutil
