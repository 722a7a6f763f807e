#pragma once

#include <cstdint>
#include <random>

namespace pgvton {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Independent per-step stream; resuming a run at step k reproduces the
/// exact draw sequence of an uninterrupted run.
inline std::mt19937_64 step_rng(std::uint64_t seed, std::uint64_t step) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(step + 1)));
}

}  // namespace pgvton
