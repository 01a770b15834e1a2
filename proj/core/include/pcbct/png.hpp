#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pcbct/image.hpp"

namespace pcbct {

// Display window in HU; values map linearly onto 0..255 and clamp.
struct Window {
  double lo = -1000.0;
  double hi = 1000.0;
};

inline constexpr Window kFullWindow{-1000.0, 1000.0};
inline constexpr Window kSoftTissueWindow{-300.0, 150.0};

// Throws ParameterError unless lo < hi.
std::uint8_t window_byte(double hu, Window window);
std::vector<std::uint8_t> window_image(const Image& image, Window window);

// RGB bytes for a signed HU difference: zero is white, positive values shade
// toward red and negative toward blue, saturating at |d| = scale.
std::vector<std::uint8_t> signed_colormap(const Image& diff, double scale = 1000.0);

// 8-bit PNG (channels 1 = gray, 3 = RGB) encoded in memory.
std::vector<std::uint8_t> encode_png(int width, int height, int channels, const std::vector<std::uint8_t>& bytes);
void write_png(const std::filesystem::path& path, int width, int height, int channels,
               const std::vector<std::uint8_t>& bytes);

void export_png(const Image& image, Window window, const std::filesystem::path& path);

}  // namespace pcbct
