#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pcbct/nn/layers.hpp"

namespace pcbct::nn {

struct CheckpointTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

// On disk: one JSON header line {magic, version, kind, meta, tensors[name,
// shape, offset, count], payload_bytes} followed by little-endian float32 data.
struct Checkpoint {
  std::string kind;
  std::string meta_json = "{}";  // model-specific metadata object
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor& tensor(const std::string& name) const;
};

Checkpoint capture(const ParameterStore& store, const std::string& kind, const std::string& meta_json);

// Copies weights into `store` by name; every parameter must be present with a
// matching shape. Extra tensors (e.g. a codebook) are ignored.
void restore(ParameterStore& store, const Checkpoint& ckpt);

std::vector<char> encode_checkpoint(const Checkpoint& ckpt);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace pcbct::nn
