#include "pcbct/nn/checkpoint.hpp"

#include <json.hpp>

#include "../binary_io.hpp"

namespace pcbct::nn {
namespace {

constexpr const char* kMagic = "pcbct-checkpoint";
constexpr int kVersion = 1;

std::string make_header(const Checkpoint& ckpt, std::size_t payload_bytes) {
  nlohmann::json h;
  h["magic"] = kMagic;
  h["version"] = kVersion;
  h["kind"] = ckpt.kind;
  h["meta"] = nlohmann::json::parse(ckpt.meta_json);
  nlohmann::json list = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    list.push_back({{"name", t.name},
                    {"shape", {t.shape.n, t.shape.c, t.shape.h, t.shape.w}},
                    {"offset", offset},
                    {"count", t.values.size()}});
    offset += t.values.size();
  }
  h["tensors"] = list;
  h["payload_bytes"] = payload_bytes;
  return h.dump();
}

}  // namespace

const CheckpointTensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw StateError("checkpoint has no tensor " + name);
}

Checkpoint capture(const ParameterStore& store, const std::string& kind, const std::string& meta_json) {
  Checkpoint c;
  c.kind = kind;
  c.meta_json = meta_json;
  for (const auto& p : store.all()) {
    CheckpointTensor t{p.name, p.var->shape(), {}};
    t.values.reserve(p.var->value.numel());
    for (Scalar v : p.var->value.values()) t.values.push_back(static_cast<float>(v));
    c.tensors.push_back(std::move(t));
  }
  return c;
}

void restore(ParameterStore& store, const Checkpoint& ckpt) {
  for (const auto& p : store.all()) {
    const CheckpointTensor* found = nullptr;
    for (const auto& t : ckpt.tensors)
      if (t.name == p.name) found = &t;
    if (!found) throw StateError("checkpoint is missing model parameter " + p.name);
    if (!(found->shape == p.var->shape()))
      throw StateError("checkpoint tensor " + p.name + " has shape " + found->shape.str() + ", model expects " +
                       p.var->shape().str());
    for (std::size_t k = 0; k < found->values.size(); ++k) p.var->value[k] = found->values[k];
  }
}

std::vector<char> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<char> payload;
  for (const auto& t : ckpt.tensors) detail::append_le_floats(payload, t.values);
  const std::string header = make_header(ckpt, payload.size());
  std::vector<char> out(header.begin(), header.end());
  out.push_back('\n');
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::vector<char> payload;
  for (const auto& t : ckpt.tensors) detail::append_le_floats(payload, t.values);
  detail::write_header_and_payload(path, make_header(ckpt, payload.size()), payload);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  const auto raw = detail::read_header_and_payload(path);
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(raw.header);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
  if (!h.is_object() || h.value("magic", "") != kMagic) throw IoError(path.string() + " is not a pcbct checkpoint");
  if (h.value("version", 0) != kVersion) throw IoError("unsupported checkpoint version in " + path.string());
  const std::size_t declared = h.at("payload_bytes").get<std::size_t>();
  if (raw.payload.size() != declared)
    throw IoError("checkpoint payload is " + std::to_string(raw.payload.size()) + " bytes, header declares " +
                  std::to_string(declared));
  Checkpoint c;
  c.kind = h.at("kind").get<std::string>();
  c.meta_json = h.at("meta").dump();
  std::size_t total = 0;
  for (const auto& e : h.at("tensors")) {
    CheckpointTensor t;
    t.name = e.at("name").get<std::string>();
    const auto s = e.at("shape");
    t.shape = Shape{s.at(0).get<int>(), s.at(1).get<int>(), s.at(2).get<int>(), s.at(3).get<int>()};
    const std::size_t offset = e.at("offset").get<std::size_t>();
    const std::size_t count = e.at("count").get<std::size_t>();
    if (count != t.shape.numel()) throw IoError("tensor " + t.name + " count does not match its shape");
    if ((offset + count) * 4 > raw.payload.size()) throw IoError("tensor " + t.name + " runs past the payload");
    t.values.resize(count);
    detail::decode_le_floats(raw.payload.data() + offset * 4, count, t.values.data());
    total += count;
    c.tensors.push_back(std::move(t));
  }
  if (total * 4 != declared) throw IoError("checkpoint payload size does not match tensor table");
  return c;
}

}  // namespace pcbct::nn
