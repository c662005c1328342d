#pragma once

#include <cstdint>
#include <random>

namespace deta {

using Rng = std::mt19937_64;

// Independent streams from one user seed: stream ids keep the generator,
// the adaptation loop and the bench runner from sharing draws.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

inline int uniform_index(Rng& rng, int n) {
  return std::uniform_int_distribution<int>(0, n - 1)(rng);
}

}  // namespace deta
