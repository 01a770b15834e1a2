#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "pcbct/nn/checkpoint.hpp"

namespace pcbct {

struct DenoiserConfig {
  std::vector<int> widths{32, 64, 128};  // channels per resolution level; depth = widths.size()
  int embedding_dim = 64;                // noise-level embedding width
  int groups = 8;                        // preferred group-norm group count
  int steps = 1000;                      // schedule length the model is trained for
  double delta = 0.999;
  double tau = 0.008;
  double learning_rate = 1e-4;
  double clip_norm = 1.0;
  int batch_size = 2;
  int epochs = 200;
  std::uint64_t seed = 0;

  void validate() const;
  int depth() const { return static_cast<int>(widths.size()); }
  // Spatial sizes must be divisible by this.
  int size_multiple() const { return 1 << (depth() - 1); }
};

// U-shaped noise predictor. Input: conditional latent and noisy latent stacked
// as two channels; the noise level enters through a sinusoidal embedding of
// sqrt(gamma) added inside every residual block. Output: one channel shaped like
// the noisy latent.
class DenoiserModel {
 public:
  explicit DenoiserModel(DenoiserConfig config);

  const DenoiserConfig& config() const { return config_; }

  // cond, noisy: (N, 1, h, w); sqrt_gamma: N values.
  nn::Var forward(const nn::Var& cond, const nn::Var& noisy, std::span<const double> sqrt_gamma) const;
  // Inference convenience without graph recording.
  nn::Tensor predict(const nn::Tensor& cond, const nn::Tensor& noisy, std::span<const double> sqrt_gamma) const;

  nn::ParameterStore& parameters() { return *store_; }
  const nn::ParameterStore& parameters() const { return *store_; }

  std::vector<double> epoch_losses;

  nn::Checkpoint to_checkpoint() const;
  static DenoiserModel from_checkpoint(const nn::Checkpoint& ckpt);

 private:
  struct Layers;

  DenoiserConfig config_;
  std::shared_ptr<nn::ParameterStore> store_;
  std::shared_ptr<Layers> layers_;
};

// Sinusoidal features of each value in `levels`: (N, dim, 1, 1).
nn::Tensor noise_level_embedding(std::span<const double> levels, int dim);

}  // namespace pcbct
