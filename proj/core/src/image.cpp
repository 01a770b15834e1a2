#include "pcbct/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pcbct/errors.hpp"

namespace pcbct {

Image::Image(int h, int w, double radius, float fill)
    : height(h), width(w), fov_radius(radius), pixels(static_cast<std::size_t>(h) * w, fill) {
  if (h <= 0 || w <= 0) throw ParameterError("image dimensions must be positive");
}

double Image::radius_of(int y, int x) const {
  const double dy = y - 0.5 * (height - 1);
  const double dx = x - 0.5 * (width - 1);
  return std::sqrt(dx * dx + dy * dy);
}

bool Image::in_fov(int y, int x) const {
  const double dy = y - 0.5 * (height - 1);
  const double dx = x - 0.5 * (width - 1);
  return dx * dx + dy * dy <= fov_radius * fov_radius;
}

std::size_t Image::fov_pixel_count() const {
  std::size_t n = 0;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) n += in_fov(y, x) ? 1 : 0;
  return n;
}

void apply_fov_mask(Image& image) {
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      if (!image.in_fov(y, x)) image.at(y, x) = kMinHu;
}

void clamp_and_mask(Image& image) {
  for (float& v : image.pixels) v = std::clamp(v, kMinHu, kMaxHu);
  apply_fov_mask(image);
}

bool Volume::same_shape(const Volume& other) const {
  return n_slices() == other.n_slices() && height() == other.height() && width() == other.width();
}

void Volume::validate() const {
  if (slices.empty()) throw DataError("volume has no slices");
  const int h = height();
  const int w = width();
  for (std::size_t k = 0; k < slices.size(); ++k) {
    const Image& s = slices[k];
    if (s.height != h || s.width != w)
      throw DataError("slice " + std::to_string(k) + " has a different shape");
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const float v = s.at(y, x);
        if (!std::isfinite(v) || v < kMinHu || v > kMaxHu)
          throw DataError("slice " + std::to_string(k) + " has a pixel outside [-1000, 1000] HU");
        if (!s.in_fov(y, x) && v != kMinHu)
          throw DataError("slice " + std::to_string(k) + " has non-air pixels outside the field of view");
      }
    }
  }
}

int default_fov_radius(int height, int width) { return std::max(1, std::min(height, width) / 2 - 2); }

}  // namespace pcbct
