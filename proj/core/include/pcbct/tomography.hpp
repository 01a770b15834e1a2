#pragma once

#include <span>
#include <vector>

#include "pcbct/image.hpp"

namespace pcbct {

inline constexpr int kDefaultAngles = 360;

// Parallel-beam projections: row k holds line integrals at angle k*pi/n_angles
// over detectors spaced `detector_spacing` pixels apart, centered on the grid.
struct Sinogram {
  int n_angles = 0;
  int n_detectors = 0;
  std::vector<double> data;
  std::vector<double> angles;
  double detector_spacing = 1.0;
  // Maximum of the source sinogram; derived sinograms carry it forward.
  double s_max = 0.0;
  // Geometry of the image grid the projections came from.
  int image_height = 0;
  int image_width = 0;
  double fov_radius = 0.0;

  double& at(int angle, int det) { return data[static_cast<std::size_t>(angle) * n_detectors + det]; }
  double at(int angle, int det) const { return data[static_cast<std::size_t>(angle) * n_detectors + det]; }
  bool same_shape(const Sinogram& other) const {
    return n_angles == other.n_angles && n_detectors == other.n_detectors;
  }
  double max_value() const;
  double total_mass() const;
};

// Odd detector count covering the grid diagonal.
int detector_count(int height, int width);

// Empty sinogram with the geometry of an H x W grid.
Sinogram make_sinogram(int height, int width, double fov_radius, int n_angles);

// Projects an attenuation grid (row-major H x W); no HU conversion.
Sinogram project_attenuation(std::span<const double> attenuation, int height, int width, double fov_radius,
                             int n_angles);

// Radon transform of an HU image mapped to attenuation (HU + 1000) / 2000.
Sinogram radon(const Image& image, int n_angles = kDefaultAngles);

// Row-wise convolution with the spatial Ram-Lak kernel (zero padded).
Sinogram ramp_filter(const Sinogram& sino);

// Filtered backprojection in attenuation units, unclamped and unmasked.
std::vector<double> fbp_attenuation(const Sinogram& sino);

// Filtered backprojection converted to HU, clamped to [-1000, 1000], FOV masked.
Image fbp(const Sinogram& sino);

}  // namespace pcbct
