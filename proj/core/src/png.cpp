#include "pcbct/png.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "pcbct/errors.hpp"

namespace pcbct {

std::uint8_t window_byte(double hu, Window window) {
  if (!(window.lo < window.hi)) throw ParameterError("display window needs lo < hi");
  const double u = std::clamp((hu - window.lo) / (window.hi - window.lo), 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(u * 255.0));
}

std::vector<std::uint8_t> window_image(const Image& image, Window window) {
  window_byte(0.0, window);
  std::vector<std::uint8_t> out(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) out[i] = window_byte(image.pixels[i], window);
  return out;
}

std::vector<std::uint8_t> signed_colormap(const Image& diff, double scale) {
  if (!(scale > 0.0)) throw ParameterError("colormap scale must be positive");
  std::vector<std::uint8_t> out(diff.size() * 3);
  for (std::size_t i = 0; i < diff.size(); ++i) {
    const double d = diff.pixels[i];
    const auto fade = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - std::min(1.0, std::abs(d) / scale))));
    std::uint8_t r = 255, g = 255, b = 255;
    if (d > 0) {
      g = fade;
      b = fade;
    } else if (d < 0) {
      r = fade;
      g = fade;
    }
    out[3 * i] = r;
    out[3 * i + 1] = g;
    out[3 * i + 2] = b;
  }
  return out;
}

namespace {

void append_bytes(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void flush_nothing(png_structp) {}

}  // namespace

std::vector<std::uint8_t> encode_png(int width, int height, int channels, const std::vector<std::uint8_t>& bytes) {
  if (width < 1 || height < 1) throw ParameterError("PNG dimensions must be positive");
  if (channels != 1 && channels != 3) throw ParameterError("PNG supports 1 or 3 channels here");
  if (bytes.size() != static_cast<std::size_t>(width) * height * channels)
    throw ParameterError("PNG byte count does not match dimensions");

  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encoding failed");
  }
  png_set_write_fn(png, &out, append_bytes, flush_nothing);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(bytes.data() + static_cast<std::size_t>(y) * width * channels));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

void write_png(const std::filesystem::path& path, int width, int height, int channels,
               const std::vector<std::uint8_t>& bytes) {
  const auto encoded = encode_png(width, height, channels, bytes);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(encoded.data()), static_cast<std::streamsize>(encoded.size()));
  if (!f) throw IoError("write failed for " + path.string());
}

void export_png(const Image& image, Window window, const std::filesystem::path& path) {
  write_png(path, image.width, image.height, 1, window_image(image, window));
}

}  // namespace pcbct
