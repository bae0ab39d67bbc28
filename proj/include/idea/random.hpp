#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace idea {

// std::uniform_int_distribution and std::shuffle are implementation-defined;
// these helpers only consume raw mt19937_64 output, whose sequence the
// standard fixes, so seeded runs agree across standard libraries.

/// Uniform integer in [0, bound) by rejection sampling. bound must be > 0.
inline std::uint64_t UniformIndex(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::mt19937_64::max() - std::mt19937_64::max() % bound;
  std::uint64_t draw = rng();
  while (draw >= limit) draw = rng();
  return draw % bound;
}

/// Fisher-Yates shuffle.
template <typename T>
void SeededShuffle(std::span<T> values, std::mt19937_64& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(UniformIndex(rng, i));
    std::swap(values[i - 1], values[j]);
  }
}

}  // namespace idea
