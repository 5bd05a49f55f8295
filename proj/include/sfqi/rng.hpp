#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace sfqi {

using Rng = std::mt19937_64;

// SplitMix64 mixing step.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a base seed and a stream index.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) + 0x632be59bd9b4e019ULL * (stream + 1));
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a,
                              std::uint64_t b) {
  return mix_seed(mix_seed(seed, a), b);
}

// Uniform double in [0, 1), 53-bit resolution. Portable across platforms,
// unlike std::uniform_real_distribution.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform double in (0, 1]; safe as a logarithm argument.
inline double uniform01_open(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
}

// Standard normal via Box-Muller. One draw consumes two engine outputs;
// nothing is cached so interleaved streams stay reproducible.
inline double standard_normal(Rng& rng) {
  const double u1 = uniform01_open(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

// Unbiased uniform integer in [0, n).
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
  const std::uint64_t cutoff = (0 - n) % n;  // 2^64 mod n
  std::uint64_t v = rng();
  while (v < cutoff) v = rng();
  return v % n;
}

}  // namespace sfqi
