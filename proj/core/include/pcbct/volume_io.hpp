#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pcbct/image.hpp"

namespace pcbct {

// One JSON header line {magic, version, height, width, n_slices, spacing,
// fov_radius_px, hu_range, payload_bytes}, '\n', then little-endian float32
// pixels, slice-major and row-major.
std::vector<char> encode_volume(const Volume& volume);
Volume decode_volume(const std::vector<char>& bytes);

// Throws DataError for an invalid volume.
void write_volume(const Volume& volume, const std::filesystem::path& path);
// Throws IoError for a missing file, corrupt header or truncated payload and
// DataError for pixels outside the declared HU range.
Volume read_volume(const std::filesystem::path& path);

}  // namespace pcbct
