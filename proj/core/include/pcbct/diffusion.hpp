#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "pcbct/codec.hpp"
#include "pcbct/image.hpp"
#include "pcbct/nn/adam.hpp"
#include "pcbct/rng.hpp"
#include "pcbct/schedule.hpp"
#include "pcbct/unet.hpp"

namespace pcbct {

// Latents beyond this magnitude are taken as unnormalized input.
inline constexpr double kLatentGuard = 10.0;

// sqrt(gamma) * z0 + sqrt(1 - gamma) * eps
std::vector<double> forward_noise(std::span<const double> z0, double gamma, std::span<const double> eps);

// Paired conditional / target latents, all h x w.
struct LatentDataset {
  int height = 0;
  int width = 0;
  std::vector<std::vector<double>> cond;
  std::vector<std::vector<double>> target;

  std::size_t size() const { return cond.size(); }
  // (N, 1, h, w) stacks of the selected samples.
  nn::Tensor stack_cond(std::span<const std::size_t> indices) const;
  nn::Tensor stack_target(std::span<const std::size_t> indices) const;
};

// Per slice: x = normalize(quantize(encode(cbct))), z0 = normalize(quantize(encode(ct))).
LatentDataset encode_pairs(const CodecModel& codec, std::span<const Volume> ct, std::span<const Volume> cbct);
// Image-space pairs (no compression): HU mapped linearly onto [-1, 1].
LatentDataset pixel_pairs(std::span<const Volume> ct, std::span<const Volume> cbct);

// Sum over latent elements of the squared noise-prediction error, averaged over
// the batch. t holds one timestep in [1, T] per sample.
nn::Var denoising_loss(const DenoiserModel& model, const nn::Tensor& cond, const nn::Tensor& target,
                       std::span<const int> t, const nn::Tensor& eps, const NoiseSchedule& schedule);

// Draws t and eps from `rng`, applies one optimizer update and returns the loss.
double training_step(DenoiserModel& model, nn::Adam& optimizer, const nn::Tensor& cond, const nn::Tensor& target,
                     const NoiseSchedule& schedule, Rng& rng);

// One ancestral update of z (in place) from z_t to z_{t-1} given the predicted
// noise; `noise` is ignored at t = 1.
void reverse_step(std::span<double> z, std::span<const double> eps_hat, int t, const NoiseSchedule& schedule,
                  std::span<const double> noise);

// Predicted noise for a batch at timestep t.
using NoisePredictor = std::function<nn::Tensor(const nn::Tensor& cond, const nn::Tensor& z, int t)>;

// Reverse chain from t = T to 1. Sample n draws its per-step noise from
// make_rng(step_seeds[n]).
nn::Tensor sample(const NoisePredictor& predictor, const nn::Tensor& cond, const nn::Tensor& initial_noise,
                  const NoiseSchedule& schedule, std::span<const std::uint64_t> step_seeds);
// Throws StateError when the schedule length differs from the model's.
nn::Tensor sample(const DenoiserModel& model, const nn::Tensor& cond, const nn::Tensor& initial_noise,
                  const NoiseSchedule& schedule, std::span<const std::uint64_t> step_seeds);

std::vector<double> initial_noise(std::uint64_t seed, int height, int width, std::uint64_t stream = 0);

enum class NoiseMode { shared, per_slice };

// Translates every slice of `cbct`. In shared mode all slices start from the
// same initial noise drawn from `noise_seed`.
Volume generate_volume(const DenoiserModel& model, const CodecModel& codec, const Volume& cbct,
                       std::uint64_t noise_seed, const NoiseSchedule& schedule, NoiseMode mode = NoiseMode::shared);

enum class SelectionMetric { mae, ssim };

struct NoiseSelection {
  std::uint64_t best_seed = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> scores;  // per candidate, MAE (lower is better) or SSIM (higher is better)
};

// Seeds base, base + 1, ..., base + n - 1.
std::vector<std::uint64_t> candidate_seeds(std::uint64_t base, int n);

NoiseSelection select_initial_noise(const DenoiserModel& model, const CodecModel& codec,
                                    const NoiseSchedule& schedule, std::span<const Volume> cbct,
                                    std::span<const Volume> ct, std::span<const std::uint64_t> candidates,
                                    SelectionMetric metric = SelectionMetric::mae);

using DenoiserEpochCallback =
    std::function<void(int epoch, double train_loss, double validation_loss, const DenoiserModel& model)>;

// Runs `config.epochs` shuffled passes of training_step. With a validation set the
// per-epoch validation loss uses fixed timesteps and noise; otherwise it is NaN.
DenoiserModel train_denoiser(const LatentDataset& train, const LatentDataset* validation,
                             const NoiseSchedule& schedule, const DenoiserConfig& config,
                             const DenoiserEpochCallback& on_epoch = {});

// Mean denoising loss over `data` with timesteps and noise drawn from `seed`.
double evaluate_denoiser(const DenoiserModel& model, const LatentDataset& data, const NoiseSchedule& schedule,
                         std::uint64_t seed);

}  // namespace pcbct
