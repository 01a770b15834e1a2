#include "pcbct/volume_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "binary_io.hpp"

namespace pcbct {

namespace {

constexpr const char* kMagic = "pcbct-volume";
constexpr int kVersion = 1;

std::string make_header(const Volume& v, std::size_t payload_bytes) {
  nlohmann::json h;
  h["magic"] = kMagic;
  h["version"] = kVersion;
  h["height"] = v.height();
  h["width"] = v.width();
  h["n_slices"] = v.n_slices();
  h["spacing"] = {v.spacing.dz, v.spacing.dy, v.spacing.dx};
  h["fov_radius_px"] = v.fov_radius_px;
  h["slice_fov_radius"] = v.slices.front().fov_radius;
  h["hu_range"] = {kMinHu, kMaxHu};
  h["payload_bytes"] = payload_bytes;
  return h.dump();
}

std::vector<char> payload_of(const Volume& v) {
  std::vector<char> payload;
  payload.reserve(static_cast<std::size_t>(v.n_slices()) * v.height() * v.width() * 4);
  for (const Image& s : v.slices) detail::append_le_floats(payload, s.pixels);
  return payload;
}

Volume parse(const std::string& header, const char* payload, std::size_t payload_size) {
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("corrupt volume header: ") + e.what());
  }
  Volume v;
  int height = 0, width = 0, n = 0;
  double lo = 0, hi = 0, slice_radius = 0;
  std::size_t declared = 0;
  try {
    if (!h.is_object() || h.value("magic", "") != kMagic) throw IoError("not a pcbct volume file");
    if (h.at("version").get<int>() != kVersion) throw IoError("unsupported volume version");
    height = h.at("height").get<int>();
    width = h.at("width").get<int>();
    n = h.at("n_slices").get<int>();
    const auto sp = h.at("spacing");
    v.spacing = Spacing{sp.at(0).get<double>(), sp.at(1).get<double>(), sp.at(2).get<double>()};
    v.fov_radius_px = h.at("fov_radius_px").get<int>();
    slice_radius = h.value("slice_fov_radius", static_cast<double>(v.fov_radius_px));
    lo = h.at("hu_range").at(0).get<double>();
    hi = h.at("hu_range").at(1).get<double>();
    declared = h.at("payload_bytes").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("corrupt volume header: ") + e.what());
  }
  if (height < 1 || width < 1 || n < 1) throw IoError("volume header has non-positive extents");
  const std::size_t expected = static_cast<std::size_t>(height) * width * n * 4;
  if (declared != expected)
    throw IoError("volume header declares " + std::to_string(declared) + " payload bytes but H*W*n_slices*4 = " +
                  std::to_string(expected));
  if (payload_size != declared)
    throw IoError("volume payload is " + std::to_string(payload_size) + " bytes, header declares " +
                  std::to_string(declared));
  for (int k = 0; k < n; ++k) {
    Image img(height, width, slice_radius);
    detail::decode_le_floats(payload + static_cast<std::size_t>(k) * height * width * 4, img.size(),
                             img.pixels.data());
    for (float p : img.pixels)
      if (!(p >= lo && p <= hi)) throw DataError("pixel value " + std::to_string(p) + " outside declared HU range");
    v.slices.push_back(std::move(img));
  }
  return v;
}

}  // namespace

std::vector<char> encode_volume(const Volume& volume) {
  volume.validate();
  const std::vector<char> payload = payload_of(volume);
  const std::string header = make_header(volume, payload.size());
  std::vector<char> out(header.begin(), header.end());
  out.push_back('\n');
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Volume decode_volume(const std::vector<char>& bytes) {
  const auto nl = std::find(bytes.begin(), bytes.end(), '\n');
  if (nl == bytes.end()) throw IoError("volume data has no header line");
  const std::string header(bytes.begin(), nl);
  const std::size_t offset = static_cast<std::size_t>(nl - bytes.begin()) + 1;
  return parse(header, bytes.data() + offset, bytes.size() - offset);
}

void write_volume(const Volume& volume, const std::filesystem::path& path) {
  volume.validate();
  const std::vector<char> payload = payload_of(volume);
  detail::write_header_and_payload(path, make_header(volume, payload.size()), payload);
}

Volume read_volume(const std::filesystem::path& path) {
  const auto raw = detail::read_header_and_payload(path);
  try {
    return parse(raw.header, raw.payload.data(), raw.payload.size());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIo) throw IoError(path.string() + ": " + e.what());
    throw;
  }
}

}  // namespace pcbct
