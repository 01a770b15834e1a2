#pragma once

#include <cmath>

#include "pcbct/image.hpp"
#include "pcbct/phantom.hpp"
#include "pcbct/rng.hpp"

namespace test {

// Round-trip bound for fbp(radon(I, 360)) on 128 x 128 phantoms. An independent
// scikit-image radon/iradon (ramp filter) reconstruction of phantom seeds 1..10
// reaches 12.6 to 17.7 HU; the bound allows 40% over its worst case.
inline constexpr double kRoundTripBoundHu = 25.0;

inline pcbct::Image phantom_slice(int size, std::uint64_t seed, int slice = 0) {
  pcbct::PhantomSpec spec;
  spec.height = spec.width = size;
  spec.n_slices = std::max(1, slice + 1);
  spec.seed = seed;
  return pcbct::generate_phantom(spec).slices[slice];
}

inline pcbct::Volume phantom_volume(int size, int slices, std::uint64_t seed) {
  pcbct::PhantomSpec spec;
  spec.height = spec.width = size;
  spec.n_slices = slices;
  spec.seed = seed;
  return pcbct::generate_phantom(spec);
}

inline double fov_mae(const pcbct::Image& a, const pcbct::Image& b) {
  double s = 0;
  int n = 0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x)
      if (a.in_fov(y, x)) {
        s += std::abs(static_cast<double>(a.at(y, x)) - b.at(y, x));
        ++n;
      }
  return s / n;
}

// Random image with every pixel inside the field of view.
inline pcbct::Image random_image(int h, int w, pcbct::Rng& rng, double lo = -1000, double hi = 1000) {
  pcbct::Image img(h, w, 10.0 * (h + w));
  std::uniform_real_distribution<double> u(lo, hi);
  for (float& p : img.pixels) p = static_cast<float>(u(rng));
  return img;
}

}  // namespace test
