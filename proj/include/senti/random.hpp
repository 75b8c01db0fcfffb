#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace senti {

// std::uniform_int_distribution and std::shuffle are implementation-defined,
// so anything that feeds an artifact goes through these instead.
using Rng = std::mt19937_64;

/// Uniform integer in [0, bound) by rejection sampling.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t bound) {
  if (bound <= 1) return 0;
  // 2^64 mod bound; values below it would bias the remainder.
  const std::uint64_t threshold = (0 - bound) % bound;
  std::uint64_t v;
  do {
    v = rng();
  } while (v < threshold);
  return v % bound;
}

/// Uniform real in [0, 1) with 53 random bits.
inline double uniform_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace senti
