#pragma once

#include <cstdint>
#include <random>

namespace flynet {

// Independent deterministic stream for (seed, stream id).
inline std::mt19937_64 derive_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  auto rng = derive_rng(seed, stream);
  return rng();
}

}  // namespace flynet
