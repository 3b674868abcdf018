#pragma once

#include <cstdint>
#include <random>

namespace sonata {

// SplitMix64 finalizer; used as a counter-based mixer so every (seed, stream,
// index) triple maps to an independent generator state.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream,
                                    std::uint64_t index = 0) noexcept {
  return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index);
}

enum class Stream : std::uint64_t {
  problem = 0x70726f62,
  network = 0x6e657477,
  algorithm = 0x616c676f,
  sampling = 0x73616d70,
};

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  return Rng(derive_seed(seed, static_cast<std::uint64_t>(stream), index));
}

}  // namespace sonata
