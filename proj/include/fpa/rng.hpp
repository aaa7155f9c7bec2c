#pragma once

#include <cstdint>
#include <random>

namespace fpa {

//! One step of splitmix64.
inline std::uint64_t splitmix64(std::uint64_t& state) noexcept
{
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seed of stream `index` under `master`; streams are independent of the
/// order in which they are requested.
inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::uint64_t index) noexcept
{
  std::uint64_t state = master;
  const std::uint64_t base = splitmix64(state);
  state = base ^ (index * 0xD1B54A32D192ED03ULL);
  splitmix64(state);
  return splitmix64(state);
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed)
{
  return Engine(seed);
}

} // namespace fpa
