#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <string_view>

#include "apcap/codec.hpp"

namespace apcap {

/// Explicit random state threaded through every stochastic operation.
using Rng = std::mt19937_64;

/// Uniform double in [0, 1) built from the top 53 bits, so draws are identical
/// across standard library implementations.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

/// Uniform index in [0, n). n must be > 0.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
}

struct Offset {
  double dx = 0.0;
  double dy = 0.0;
};

/// Uniform point in a disc of the given radius (area-uniform).
inline Offset uniform_in_disc(Rng& rng, double radius) {
  const double r = radius * std::sqrt(uniform01(rng));
  const double theta = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  return {r * std::cos(theta), r * std::sin(theta)};
}

/// Standard normal via Box-Muller; deterministic across platforms given the
/// same Rng stream.
inline double standard_normal(Rng& rng) {
  const double u1 = 1.0 - uniform01(rng);  // (0, 1]
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Seeds carried on the wire are masked to 53 bits so every JSON consumer
/// represents them exactly.
inline constexpr std::uint64_t kSeedMask = (std::uint64_t{1} << 53) - 1;

/// Stable seed derivation: SHA-256 over the unit-separated parts, first 8 bytes
/// little-endian, masked to 53 bits.
template <typename... Parts>
std::uint64_t derive_seed(std::uint64_t global_seed, const Parts&... parts) {
  std::string material = std::to_string(global_seed);
  ((material += '\x1f', material += std::string_view(parts)), ...);
  const auto digest = sha256(material);
  std::uint64_t seed = 0;
  for (int i = 7; i >= 0; --i) seed = (seed << 8) | digest[static_cast<std::size_t>(i)];
  return seed & kSeedMask;
}

}  // namespace apcap
