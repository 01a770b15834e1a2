#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pcbct {

inline constexpr float kMinHu = -1000.0f;
inline constexpr float kMaxHu = 1000.0f;

// [-1000, 1000] HU <-> [0, 1]
constexpr double hu_to_unit(double hu) { return (hu + 1000.0) / 2000.0; }
constexpr double unit_to_hu(double u) { return u * 2000.0 - 1000.0; }

// A 2D slice of CT values in HU, row-major. Pixels farther than `fov_radius`
// from the grid center ((W-1)/2, (H-1)/2) lie outside the field of view.
struct Image {
  int height = 0;
  int width = 0;
  double fov_radius = 0.0;
  std::vector<float> pixels;

  Image() = default;
  Image(int height, int width, double fov_radius, float fill = kMinHu);

  float& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  std::size_t size() const { return pixels.size(); }
  bool in_fov(int y, int x) const;
  // Distance of pixel (y, x) from the grid center, in pixels.
  double radius_of(int y, int x) const;
  std::size_t fov_pixel_count() const;
  bool same_shape(const Image& other) const { return height == other.height && width == other.width; }
};

// Sets every pixel outside the field of view to -1000 HU.
void apply_fov_mask(Image& image);

// Clamps to [-1000, 1000] HU and masks the field of view.
void clamp_and_mask(Image& image);

struct Spacing {
  double dz = 1.0;
  double dy = 1.0;
  double dx = 1.0;
};

struct Volume {
  std::vector<Image> slices;
  Spacing spacing;
  int fov_radius_px = 0;

  int height() const { return slices.empty() ? 0 : slices.front().height; }
  int width() const { return slices.empty() ? 0 : slices.front().width; }
  int n_slices() const { return static_cast<int>(slices.size()); }
  bool same_shape(const Volume& other) const;

  // Throws DataError when slices disagree in shape, pixels leave [-1000, 1000]
  // HU, or pixels outside the field of view are not air.
  void validate() const;
};

// Default field-of-view radius for an H x W grid.
int default_fov_radius(int height, int width);

}  // namespace pcbct
