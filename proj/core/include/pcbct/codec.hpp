#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "pcbct/image.hpp"
#include "pcbct/nn/checkpoint.hpp"

namespace pcbct {

struct CodecConfig {
  int factor = 4;                        // spatial compression, a power of two
  std::vector<int> widths{32, 64, 128};  // channels per resolution level
  int codebook_size = 512;
  double commitment = 0.25;
  double ema_decay = 0.99;
  int dead_code_steps = 100;
  double learning_rate = 2e-4;
  double clip_norm = 1.0;
  int batch_size = 4;
  int max_epochs = 1000;
  int patience = 50;
  std::uint64_t seed = 0;

  void validate() const;
  int levels() const;
};

// Single-channel latent (D = 1) of size (H / f) x (W / f).
struct LatentGrid {
  int height = 0;
  int width = 0;
  std::vector<double> values;
  bool quantized = false;
  bool normalized = false;
};

// Nearest codebook entry per value; ties go to the lowest index.
LatentGrid quantize(const LatentGrid& latent, std::span<const double> codebook);

// Affine map sending the codebook minimum to -1 and maximum to +1, and its inverse.
LatentGrid normalize_latent(const LatentGrid& latent, std::span<const double> codebook);
LatentGrid denormalize_latent(const LatentGrid& latent, std::span<const double> codebook);

struct CodecTrainingLog {
  std::vector<double> train_loss;       // per epoch, reconstruction + commitment
  std::vector<double> validation_loss;  // per epoch, reconstruction MSE in [0, 1] space
  int best_epoch = 0;                   // 1-based
  bool early_stopped = false;
};

class CodecModel {
 public:
  explicit CodecModel(CodecConfig config);

  const CodecConfig& config() const { return config_; }
  int factor() const { return config_.factor; }
  const std::vector<double>& codebook() const { return codebook_; }
  double codebook_min() const;
  double codebook_max() const;
  void set_codebook(std::vector<double> entries);

  // Continuous latents of HU images; sizes must be divisible by the factor.
  std::vector<LatentGrid> encode(std::span<const Image> images) const;
  LatentGrid encode(const Image& image) const;
  LatentGrid quantize(const LatentGrid& latent) const { return pcbct::quantize(latent, codebook_); }
  LatentGrid normalize(const LatentGrid& latent) const { return normalize_latent(latent, codebook_); }
  LatentGrid denormalize(const LatentGrid& latent) const { return denormalize_latent(latent, codebook_); }

  // Decodes to HU in [-1000, 1000] with the given field-of-view radius applied.
  std::vector<Image> decode(std::span<const LatentGrid> latents, double fov_radius) const;
  Image decode(const LatentGrid& latent, double fov_radius) const;

  // decode(quantize(encode(image)))
  Image reconstruct(const Image& image) const;

  nn::Var encoder_forward(const nn::Var& unit_images) const;
  nn::Var decoder_forward(const nn::Var& latents) const;

  nn::ParameterStore& parameters() { return *store_; }
  const nn::ParameterStore& parameters() const { return *store_; }
  CodecTrainingLog& log() { return log_; }
  const CodecTrainingLog& log() const { return log_; }

  nn::Checkpoint to_checkpoint() const;
  static CodecModel from_checkpoint(const nn::Checkpoint& ckpt);

 private:
  struct Layers;

  CodecConfig config_;
  std::shared_ptr<nn::ParameterStore> store_;
  std::shared_ptr<Layers> layers_;
  std::vector<double> codebook_;
  CodecTrainingLog log_;
};

using EpochCallback = std::function<void(int epoch, double train_loss, double validation_loss)>;

// Trains on `train`, early-stopping on `validation` loss; returns the
// best-validation weights and codebook.
CodecModel train_codec(std::span<const Image> train, std::span<const Image> validation, const CodecConfig& config,
                       const EpochCallback& on_epoch = {});

// Holds out every tenth image (at least one) for validation.
CodecModel train_codec(std::span<const Image> dataset, int factor, CodecConfig config,
                       const EpochCallback& on_epoch = {});

}  // namespace pcbct
