#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace pcbct {

using Rng = std::mt19937_64;

// Mixes (seed, stream) into an independent 64-bit seed (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Generator for substream `stream` of `seed`; distinct streams are decorrelated.
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);

void fill_normal(Rng& rng, std::span<double> out, double stddev = 1.0);
void fill_normal(Rng& rng, std::span<float> out, double stddev = 1.0);

}  // namespace pcbct
