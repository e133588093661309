#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace fuselm {

// SplitMix64 finalizer; used to derive independent streams from a seed tuple.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix64(std::uint64_t a, std::uint64_t b) { return mix64(mix64(a) ^ b); }

constexpr std::uint64_t mix64(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix64(mix64(a, b) ^ mix64(c));
}

// Uniform double in [0, 1) from the top 53 bits.
inline double unit_double(std::uint64_t bits) { return double(bits >> 11) * 0x1.0p-53; }

inline double unit_double(std::mt19937_64& rng) { return unit_double(rng()); }

// Uniform integer in [0, n) by rejection; identical on every standard library,
// unlike std::uniform_int_distribution.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n);

// Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed);

}  // namespace fuselm
