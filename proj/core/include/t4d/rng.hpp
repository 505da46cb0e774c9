#pragma once

#include <cmath>
#include <cstdint>

namespace t4d {

// Counter-based randomness: every draw is a pure function of
// (seed, stream, a, b), so draws are order-independent, parallelism-proof,
// and trivially resumable.

namespace rng_stream {
inline constexpr std::uint64_t kPrimitive = 1;
inline constexpr std::uint64_t kGateThreshold = 2;
inline constexpr std::uint64_t kGateBernoulli = 3;
inline constexpr std::uint64_t kInitWeights = 4;
inline constexpr std::uint64_t kTrainView = 5;
inline constexpr std::uint64_t kTrainTime = 6;
inline constexpr std::uint64_t kDensify = 7;
}  // namespace rng_stream

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t rng_key(std::uint64_t seed, std::uint64_t stream, std::uint64_t a,
                             std::uint64_t b = 0) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ (stream * 0xd1342543de82ef95ULL));
  h = mix64(h ^ (a * 0xaf251af3b0f025b5ULL));
  h = mix64(h ^ (b * 0x9e6c63d0876a9a47ULL));
  return h;
}

// Uniform draw strictly inside (0,1).
inline double rng_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t a,
                          std::uint64_t b = 0) {
  const std::uint64_t h = rng_key(seed, stream, a, b);
  return (static_cast<double>(h >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

// Standard normal via Box-Muller over two counter draws.
inline double rng_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t a,
                         std::uint64_t b = 0) {
  const double u1 = rng_uniform(seed, stream, a, 2 * b);
  const double u2 = rng_uniform(seed, stream, a, 2 * b + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace t4d
