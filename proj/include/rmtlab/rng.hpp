#pragma once

#include <cstdint>
#include <random>

namespace rmtlab {

// splitmix64: tiny, well-mixed generator used only to derive stream seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Order-independent seed for a work item: every (master, a, b, c) tuple maps
// to its own stream, so parallel and sequential sampling draw identically.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = master;
  std::uint64_t h = splitmix64(s);
  s ^= a + 0x9e3779b97f4a7c15ull;
  h ^= splitmix64(s);
  s ^= b + 0xb5297a4d3a2646c9ull;
  h ^= splitmix64(s);
  s ^= c + 0x68e31da4979462efull;
  h ^= splitmix64(s);
  return h;
}

inline std::mt19937_64 make_engine(std::uint64_t seed) {
  return std::mt19937_64(seed);
}

}  // namespace rmtlab
