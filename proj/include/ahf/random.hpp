#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace ahf {

/// Every stochastic component takes one of these by reference; there is no
/// global generator.
using Rng = std::mt19937_64;

/// SplitMix64-based seed derivation, e.g. derive_seed(seed, {epoch, batch, slot}).
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts);

// The helpers below consume raw 64-bit draws directly so that sequences are
// identical across standard library implementations.

/// Uniform in [0, 1).
double uniform01(Rng& rng);
double uniform(Rng& rng, double lo, double hi);
/// Uniform integer in [0, n).
std::size_t uniform_index(Rng& rng, std::size_t n);
bool coin(Rng& rng, double p);
double standard_normal(Rng& rng);
/// Normal(0, std) truncated to [-2 std, 2 std] by resampling.
double truncated_normal(Rng& rng, double std);

template <typename It>
void shuffle(It first, It last, Rng& rng) {
  const auto n = static_cast<std::size_t>(last - first);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = uniform_index(rng, i);
    std::swap(first[i - 1], first[j]);
  }
}

}  // namespace ahf
