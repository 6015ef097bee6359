#pragma once

#include <cstdint>
#include <random>

namespace gvae {

using Rng = std::mt19937_64;

// Independent streams derived from one user seed.
enum class Stream : std::uint64_t {
  kInit = 1,
  kNoise = 2,
  kSampler = 3,
  kShuffle = 4,
  kData = 5,
  kSplit = 6,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline Rng make_stream(std::uint64_t seed, Stream stream) {
  return Rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(stream))));
}

}  // namespace gvae
