#pragma once

#include <cstdint>
#include <random>

namespace qsam {

// Seed derivation and uniform draws are written out explicitly so that
// results are identical across standard library implementations
// (std::mt19937_64 is fully specified, the std distributions are not).

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Independent seed for sub-stream `stream` of a master seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = seed;
  std::uint64_t a = splitmix64(s);
  s ^= 0xD1B54A32D192ED03ull * (stream + 1);
  return splitmix64(s) ^ a;
}

/// Uniform double in [0, 1).
inline double uniform_double(std::mt19937_64& g) {
  return double(g() >> 11) * 0x1.0p-53;
}

template <typename T>
T uniform(std::mt19937_64& g, T lo, T hi) {
  return lo + T(uniform_double(g)) * (hi - lo);
}

/// Uniform integer in [lo, hi] inclusive.
inline int uniform_int(std::mt19937_64& g, int lo, int hi) {
  const int span = hi - lo + 1;
  int v = lo + int(uniform_double(g) * span);
  return v > hi ? hi : v;
}

inline bool coin_flip(std::mt19937_64& g) { return uniform_double(g) < 0.5; }

}  // namespace qsam
