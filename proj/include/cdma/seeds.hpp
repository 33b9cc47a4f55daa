#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace cdma {

// All stochastic code draws from this engine. Gaussian variates come from
// std::normal_distribution on top of it, so bit-exact reproduction holds for
// a given standard library implementation (libstdc++ uses the Marsaglia
// polar method).
using Rng = std::mt19937_64;

// splitmix64 finaliser; a bijection on 64-bit words.
std::uint64_t mix64(std::uint64_t x);

// Counter-based split: seed_i = mix64(master + (i + 1) * 0x9E3779B97F4A7C15).
// Distinct counters give distinct pre-images, and mix64 is a bijection, so
// the expansion of one master seed never collides. Stable across versions.
std::vector<std::uint64_t> expand_seeds(std::uint64_t master_seed, std::size_t count);

std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t index);

}  // namespace cdma
