#pragma once

// Little-endian float32 payloads behind a one-line JSON header.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "pcbct/errors.hpp"

namespace pcbct::detail {

inline void append_le_floats(std::vector<char>& out, std::span<const float> values) {
  const std::size_t start = out.size();
  out.resize(start + values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) out[start + i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
  }
}

inline void decode_le_floats(const char* bytes, std::size_t count, float* out) {
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b)
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + b])) << (8 * b);
    out[i] = std::bit_cast<float>(bits);
  }
}

// Writes header + '\n' + payload atomically enough for our purposes (temp + rename).
inline void write_header_and_payload(const std::filesystem::path& path, const std::string& header,
                                     const std::vector<char>& payload) {
  if (header.find('\n') != std::string::npos) throw IoError("header must be a single line");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
    f.write(header.data(), static_cast<std::streamsize>(header.size()));
    f.put('\n');
    f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!f) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

struct HeaderAndPayload {
  std::string header;
  std::vector<char> payload;
};

inline HeaderAndPayload read_header_and_payload(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  HeaderAndPayload out;
  if (!std::getline(f, out.header)) throw IoError("missing header in " + path.string());
  out.payload.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  return out;
}

}  // namespace pcbct::detail
