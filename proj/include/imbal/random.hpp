#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace imbal {

/// Engine used for every stochastic step. mt19937_64 is fully specified by
/// the standard; the helpers below avoid the library distributions, whose
/// algorithms are implementation-defined, so results are portable.
using Rng = std::mt19937_64;

/// Uniform real in [0, 1) from the top 53 bits of one draw.
inline double uniform_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, bound) by rejection; bound must be positive.
std::uint64_t uniform_below(Rng& rng, std::uint64_t bound);

template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

/// Child seed for a named stage. Adding a new label never perturbs seeds
/// derived under other labels.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view label);

}  // namespace imbal
