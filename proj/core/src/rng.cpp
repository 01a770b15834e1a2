#include "pcbct/rng.hpp"

namespace pcbct {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  const std::uint64_t s = derive_seed(seed, stream);
  std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

void fill_normal(Rng& rng, std::span<double> out, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : out) v = dist(rng);
}

void fill_normal(Rng& rng, std::span<float> out, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (float& v : out) v = static_cast<float>(dist(rng));
}

}  // namespace pcbct
