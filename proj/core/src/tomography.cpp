#include "pcbct/tomography.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pcbct/errors.hpp"

namespace pcbct {

double Sinogram::max_value() const {
  return data.empty() ? 0.0 : *std::max_element(data.begin(), data.end());
}

double Sinogram::total_mass() const {
  double s = 0.0;
  for (double v : data) s += v;
  return s;
}

int detector_count(int height, int width) {
  const double diag = std::sqrt(static_cast<double>(height) * height + static_cast<double>(width) * width);
  int n = static_cast<int>(std::ceil(diag)) + 2;
  return n % 2 == 0 ? n + 1 : n;
}

Sinogram make_sinogram(int height, int width, double fov_radius, int n_angles) {
  if (n_angles < 1) throw ParameterError("n_angles must be at least 1");
  if (height <= 0 || width <= 0) throw ParameterError("image dimensions must be positive");
  Sinogram s;
  s.n_angles = n_angles;
  s.n_detectors = detector_count(height, width);
  s.data.assign(static_cast<std::size_t>(n_angles) * s.n_detectors, 0.0);
  s.angles.resize(n_angles);
  for (int k = 0; k < n_angles; ++k) s.angles[k] = std::numbers::pi * k / n_angles;
  s.image_height = height;
  s.image_width = width;
  s.fov_radius = fov_radius;
  return s;
}

Sinogram project_attenuation(std::span<const double> attenuation, int height, int width, double fov_radius,
                             int n_angles) {
  if (attenuation.size() != static_cast<std::size_t>(height) * width)
    throw ParameterError("attenuation grid size does not match dimensions");
  Sinogram s = make_sinogram(height, width, fov_radius, n_angles);
  const double cy = 0.5 * (height - 1);
  const double cx = 0.5 * (width - 1);
  const double center = 0.5 * (s.n_detectors - 1);

  // Pixel-driven: each pixel is split into 2 x 2 quarter-mass points and every
  // point's mass is shared linearly between the two detectors bracketing its
  // projection. A single point per pixel left aliasing streaks in flat regions.
  constexpr double kOffsets[] = {-0.25, 0.25};
  for (int k = 0; k < n_angles; ++k) {
    const double c = std::cos(s.angles[k]);
    const double sn = std::sin(s.angles[k]);
    double* row = &s.data[static_cast<std::size_t>(k) * s.n_detectors];
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double mu = 0.25 * attenuation[static_cast<std::size_t>(y) * width + x];
        if (mu == 0.0) continue;
        const double t0 = (x - cx) * c + (y - cy) * sn + center;
        for (double oy : kOffsets) {
          for (double ox : kOffsets) {
            const double t = t0 + ox * c + oy * sn;
            const double f = std::floor(t);
            const int i = static_cast<int>(f);
            const double w = t - f;
            if (i >= 0 && i < s.n_detectors) row[i] += mu * (1.0 - w);
            if (i + 1 >= 0 && i + 1 < s.n_detectors) row[i + 1] += mu * w;
          }
        }
      }
    }
  }
  s.s_max = s.max_value();
  return s;
}

Sinogram radon(const Image& image, int n_angles) {
  if (n_angles < 1) throw ParameterError("n_angles must be at least 1");
  std::vector<double> mu(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const float v = image.pixels[i];
    if (!std::isfinite(v)) throw DataError("non-finite pixel in radon input");
    mu[i] = hu_to_unit(v);
  }
  return project_attenuation(mu, image.height, image.width, image.fov_radius, n_angles);
}

Sinogram ramp_filter(const Sinogram& sino) {
  const int nd = sino.n_detectors;
  if (nd < 2) throw ParameterError("ramp filter needs at least two detectors");
  for (double v : sino.data)
    if (!std::isfinite(v)) throw DataError("non-finite sinogram value");

  // h(0) = 1/4, h(n) = -1/(pi^2 n^2) for odd n, 0 for even n (unit spacing).
  const double tau = sino.detector_spacing;
  std::vector<double> kernel(2 * nd - 1, 0.0);
  for (int n = -(nd - 1); n <= nd - 1; ++n) {
    double h = 0.0;
    if (n == 0) {
      h = 1.0 / (4.0 * tau * tau);
    } else if (n % 2 != 0) {
      h = -1.0 / (std::numbers::pi * std::numbers::pi * n * n * tau * tau);
    }
    kernel[n + nd - 1] = h * tau;
  }

  Sinogram out = sino;
  for (int k = 0; k < sino.n_angles; ++k) {
    const double* in = &sino.data[static_cast<std::size_t>(k) * nd];
    double* o = &out.data[static_cast<std::size_t>(k) * nd];
    for (int i = 0; i < nd; ++i) {
      double acc = 0.0;
      for (int j = 0; j < nd; ++j) acc += in[j] * kernel[i - j + nd - 1];
      o[i] = acc;
    }
  }
  return out;
}

std::vector<double> fbp_attenuation(const Sinogram& sino) {
  if (sino.n_angles < 1) throw ParameterError("n_angles must be at least 1");
  if (sino.image_height <= 0 || sino.image_width <= 0) throw ParameterError("sinogram has no image geometry");
  const Sinogram filtered = ramp_filter(sino);
  const int h = sino.image_height;
  const int w = sino.image_width;
  const int nd = sino.n_detectors;
  const double cy = 0.5 * (h - 1);
  const double cx = 0.5 * (w - 1);
  const double center = 0.5 * (nd - 1);
  const double dtheta = std::numbers::pi / sino.n_angles;

  std::vector<double> mu(static_cast<std::size_t>(h) * w, 0.0);
  for (int k = 0; k < sino.n_angles; ++k) {
    const double c = std::cos(sino.angles[k]);
    const double sn = std::sin(sino.angles[k]);
    const double* row = &filtered.data[static_cast<std::size_t>(k) * nd];
    for (int y = 0; y < h; ++y) {
      const double base = (y - cy) * sn + center;
      for (int x = 0; x < w; ++x) {
        const double t = (x - cx) * c + base;
        const double f = std::floor(t);
        const int i = static_cast<int>(f);
        const double frac = t - f;
        double v = 0.0;
        if (i >= 0 && i < nd) v += row[i] * (1.0 - frac);
        if (i + 1 >= 0 && i + 1 < nd) v += row[i + 1] * frac;
        mu[static_cast<std::size_t>(y) * w + x] += v;
      }
    }
  }
  for (double& v : mu) v *= dtheta;
  return mu;
}

Image fbp(const Sinogram& sino) {
  const std::vector<double> mu = fbp_attenuation(sino);
  Image img(sino.image_height, sino.image_width, sino.fov_radius);
  for (std::size_t i = 0; i < mu.size(); ++i) img.pixels[i] = static_cast<float>(unit_to_hu(mu[i]));
  clamp_and_mask(img);
  return img;
}

}  // namespace pcbct
