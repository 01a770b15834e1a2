#include "pcbct/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "pcbct/errors.hpp"
#include "pcbct/metrics.hpp"

namespace pcbct {

using nn::Shape;
using nn::Tensor;
using nn::Var;

namespace {

void guard_latent(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v) || std::abs(v) > kLatentGuard)
      throw DataError(std::string(what) + " latent value " + std::to_string(v) +
                      " is outside the normalized range (|v| <= 10)");
  }
}

Tensor stack(const std::vector<std::vector<double>>& rows, std::span<const std::size_t> indices, int h, int w) {
  Tensor t(Shape{static_cast<int>(indices.size()), 1, h, w});
  for (std::size_t i = 0; i < indices.size(); ++i)
    std::copy(rows.at(indices[i]).begin(), rows.at(indices[i]).end(), t.sample(static_cast<int>(i)));
  return t;
}

void check_pair_volumes(std::span<const Volume> ct, std::span<const Volume> cbct) {
  if (ct.size() != cbct.size()) throw DataError("CT and CBCT volume counts differ");
  for (std::size_t i = 0; i < ct.size(); ++i)
    if (!ct[i].same_shape(cbct[i])) throw DataError("CT and CBCT volume " + std::to_string(i) + " differ in shape");
}

}  // namespace

std::vector<double> forward_noise(std::span<const double> z0, double gamma, std::span<const double> eps) {
  if (z0.size() != eps.size()) throw ParameterError("forward_noise: z0 and eps differ in size");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ParameterError("forward_noise: gamma must lie in [0, 1]");
  const double a = std::sqrt(gamma);
  const double b = std::sqrt(1.0 - gamma);
  std::vector<double> out(z0.size());
  for (std::size_t i = 0; i < z0.size(); ++i) out[i] = a * z0[i] + b * eps[i];
  return out;
}

Tensor LatentDataset::stack_cond(std::span<const std::size_t> indices) const {
  return stack(cond, indices, height, width);
}

Tensor LatentDataset::stack_target(std::span<const std::size_t> indices) const {
  return stack(target, indices, height, width);
}

LatentDataset encode_pairs(const CodecModel& codec, std::span<const Volume> ct, std::span<const Volume> cbct) {
  check_pair_volumes(ct, cbct);
  LatentDataset out;
  auto latents = [&](const Volume& v) {
    std::vector<std::vector<double>> rows;
    for (const LatentGrid& g : codec.encode(v.slices)) {
      const LatentGrid n = codec.normalize(codec.quantize(g));
      out.height = n.height;
      out.width = n.width;
      rows.push_back(n.values);
    }
    return rows;
  };
  for (std::size_t i = 0; i < ct.size(); ++i) {
    auto x = latents(cbct[i]);
    auto z = latents(ct[i]);
    for (std::size_t k = 0; k < x.size(); ++k) {
      out.cond.push_back(std::move(x[k]));
      out.target.push_back(std::move(z[k]));
    }
  }
  return out;
}

LatentDataset pixel_pairs(std::span<const Volume> ct, std::span<const Volume> cbct) {
  check_pair_volumes(ct, cbct);
  LatentDataset out;
  auto rows = [&](const Image& img) {
    out.height = img.height;
    out.width = img.width;
    std::vector<double> r(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) r[i] = img.pixels[i] / 1000.0;
    return r;
  };
  for (std::size_t i = 0; i < ct.size(); ++i) {
    for (int k = 0; k < ct[i].n_slices(); ++k) {
      out.cond.push_back(rows(cbct[i].slices[k]));
      out.target.push_back(rows(ct[i].slices[k]));
    }
  }
  return out;
}

Var denoising_loss(const DenoiserModel& model, const Tensor& cond, const Tensor& target, std::span<const int> t,
                   const Tensor& eps, const NoiseSchedule& schedule) {
  const Shape s = target.shape();
  if (!(cond.shape() == s) || !(eps.shape() == s)) throw ParameterError("denoising_loss: shape mismatch");
  if (t.size() != static_cast<std::size_t>(s.n)) throw ParameterError("denoising_loss: one timestep per sample");
  Tensor noisy(s);
  std::vector<double> sqrt_gamma(s.n);
  for (int n = 0; n < s.n; ++n) {
    if (t[n] < 1 || t[n] > schedule.steps) throw ParameterError("timestep out of range");
    const double g = schedule.gamma_at(t[n]);
    sqrt_gamma[n] = std::sqrt(g);
    const double b = std::sqrt(1.0 - g);
    const double* z0 = target.sample(n);
    const double* e = eps.sample(n);
    double* zt = noisy.sample(n);
    for (std::size_t i = 0; i < target.sample_size(); ++i) zt[i] = sqrt_gamma[n] * z0[i] + b * e[i];
  }
  const Var pred = model.forward(nn::constant(cond), nn::constant(std::move(noisy)), sqrt_gamma);
  return nn::sum_squared_error(pred, nn::constant(eps), 1.0 / s.n);
}

double training_step(DenoiserModel& model, nn::Adam& optimizer, const Tensor& cond, const Tensor& target,
                     const NoiseSchedule& schedule, Rng& rng) {
  if (model.config().steps != schedule.steps)
    throw StateError("schedule has " + std::to_string(schedule.steps) + " steps but the model was configured for " +
                     std::to_string(model.config().steps));
  guard_latent(cond.values(), "conditional");
  guard_latent(target.values(), "target");
  const int n = target.shape().n;
  std::uniform_int_distribution<int> pick(1, schedule.steps);
  std::vector<int> t(n);
  for (int& v : t) v = pick(rng);
  Tensor eps(target.shape());
  fill_normal(rng, eps.values());
  const Var loss = denoising_loss(model, cond, target, t, eps, schedule);
  optimizer.zero_grad();
  nn::backward(loss);
  optimizer.step();
  return loss->value[0];
}

void reverse_step(std::span<double> z, std::span<const double> eps_hat, int t, const NoiseSchedule& schedule,
                  std::span<const double> noise) {
  if (eps_hat.size() != z.size()) throw ParameterError("reverse_step: prediction size mismatch");
  if (t < 1 || t > schedule.steps) throw ParameterError("reverse_step: timestep out of range");
  const double beta = schedule.beta_at(t);
  const double gamma = schedule.gamma_at(t);
  const double coef = beta / std::sqrt(1.0 - gamma);
  const double inv = 1.0 / std::sqrt(1.0 - beta);
  double sigma = 0.0;
  if (t > 1) {
    if (noise.size() != z.size()) throw ParameterError("reverse_step: noise size mismatch");
    sigma = std::sqrt(beta * (1.0 - schedule.gamma_at(t - 1)) / (1.0 - gamma));
  }
  for (std::size_t i = 0; i < z.size(); ++i) {
    z[i] = (z[i] - coef * eps_hat[i]) * inv;
    if (t > 1) z[i] += sigma * noise[i];
  }
}

Tensor sample(const NoisePredictor& predictor, const Tensor& cond, const Tensor& initial, const NoiseSchedule& schedule,
              std::span<const std::uint64_t> step_seeds) {
  if (!(cond.shape() == initial.shape())) throw ParameterError("sample: initial noise shape differs from the condition");
  const int n = initial.shape().n;
  if (step_seeds.size() != static_cast<std::size_t>(n)) throw ParameterError("sample: one step seed per sample");
  guard_latent(cond.values(), "conditional");
  std::vector<Rng> rngs;
  for (std::uint64_t s : step_seeds) rngs.push_back(make_rng(s));
  Tensor z = initial;
  std::vector<double> noise(initial.sample_size());
  for (int t = schedule.steps; t >= 1; --t) {
    const Tensor eps = predictor(cond, z, t);
    if (!(eps.shape() == z.shape())) throw StateError("noise predictor returned shape " + eps.shape().str());
    for (int k = 0; k < n; ++k) {
      if (t > 1) fill_normal(rngs[k], noise);
      std::span<double> zk(z.sample(k), z.sample_size());
      reverse_step(zk, std::span<const double>(eps.sample(k), z.sample_size()), t, schedule, noise);
    }
  }
  return z;
}

Tensor sample(const DenoiserModel& model, const Tensor& cond, const Tensor& initial, const NoiseSchedule& schedule,
              std::span<const std::uint64_t> step_seeds) {
  if (model.config().steps != schedule.steps)
    throw StateError("schedule has " + std::to_string(schedule.steps) + " steps but the model was configured for " +
                     std::to_string(model.config().steps));
  NoisePredictor predictor = [&](const Tensor& c, const Tensor& z, int t) {
    std::vector<double> level(c.shape().n, std::sqrt(schedule.gamma_at(t)));
    return model.predict(c, z, level);
  };
  return sample(predictor, cond, initial, schedule, step_seeds);
}

std::vector<double> initial_noise(std::uint64_t seed, int height, int width, std::uint64_t stream) {
  std::vector<double> out(static_cast<std::size_t>(height) * width);
  Rng rng = make_rng(seed, stream);
  fill_normal(rng, out);
  return out;
}

Volume generate_volume(const DenoiserModel& model, const CodecModel& codec, const Volume& cbct,
                       std::uint64_t noise_seed, const NoiseSchedule& schedule, NoiseMode mode) {
  if (cbct.slices.empty()) throw DataError("cannot translate an empty volume");
  const std::vector<LatentGrid> latents = codec.encode(cbct.slices);
  const int h = latents.front().height;
  const int w = latents.front().width;
  const int n = static_cast<int>(latents.size());

  Tensor cond(Shape{n, 1, h, w});
  for (int k = 0; k < n; ++k) {
    const LatentGrid x = codec.normalize(codec.quantize(latents[k]));
    std::copy(x.values.begin(), x.values.end(), cond.sample(k));
  }
  Tensor init(cond.shape());
  std::vector<std::uint64_t> step_seeds(n);
  const std::vector<double> shared = initial_noise(noise_seed, h, w);
  for (int k = 0; k < n; ++k) {
    const std::vector<double> own =
        mode == NoiseMode::shared ? shared : initial_noise(derive_seed(noise_seed, 2), h, w, k);
    std::copy(own.begin(), own.end(), init.sample(k));
    step_seeds[k] = derive_seed(derive_seed(noise_seed, 1), k);
  }
  const Tensor z = sample(model, cond, init, schedule, step_seeds);

  std::vector<LatentGrid> out_latents;
  for (int k = 0; k < n; ++k) {
    LatentGrid g{h, w, std::vector<double>(z.sample(k), z.sample(k) + z.sample_size()), false, true};
    out_latents.push_back(codec.denormalize(g));
  }
  Volume out;
  out.spacing = cbct.spacing;
  out.fov_radius_px = cbct.fov_radius_px;
  out.slices = codec.decode(out_latents, cbct.slices.front().fov_radius);
  return out;
}

std::vector<std::uint64_t> candidate_seeds(std::uint64_t base, int n) {
  if (n < 1) throw ParameterError("need at least one noise candidate");
  std::vector<std::uint64_t> out(n);
  std::iota(out.begin(), out.end(), base);
  return out;
}

NoiseSelection select_initial_noise(const DenoiserModel& model, const CodecModel& codec,
                                    const NoiseSchedule& schedule, std::span<const Volume> cbct,
                                    std::span<const Volume> ct, std::span<const std::uint64_t> candidates,
                                    SelectionMetric metric) {
  if (cbct.empty()) throw DataError("validation set is empty");
  check_pair_volumes(ct, cbct);
  if (candidates.empty()) throw ParameterError("need at least one noise candidate");
  NoiseSelection sel;
  double best = 0.0;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    double score = 0.0;
    for (std::size_t i = 0; i < cbct.size(); ++i) {
      const Volume syn = generate_volume(model, codec, cbct[i], candidates[c], schedule, NoiseMode::shared);
      score += metric == SelectionMetric::mae ? mae(syn, ct[i]) : ssim(syn, ct[i]);
    }
    score /= static_cast<double>(cbct.size());
    sel.seeds.push_back(candidates[c]);
    sel.scores.push_back(score);
    const bool better = metric == SelectionMetric::mae ? score < best : score > best;
    if (c == 0 || better) {
      best = score;
      sel.best_seed = candidates[c];
    }
  }
  return sel;
}

double evaluate_denoiser(const DenoiserModel& model, const LatentDataset& data, const NoiseSchedule& schedule,
                         std::uint64_t seed) {
  if (data.size() == 0) throw DataError("evaluation set is empty");
  nn::NoGradGuard guard;
  Rng rng = make_rng(seed, 33);
  std::uniform_int_distribution<int> pick(1, schedule.steps);
  double total = 0.0;
  const int batch = std::max(1, model.config().batch_size);
  for (std::size_t b = 0; b < data.size(); b += batch) {
    std::vector<std::size_t> idx(std::min<std::size_t>(batch, data.size() - b));
    std::iota(idx.begin(), idx.end(), b);
    const Tensor cond = data.stack_cond(idx);
    const Tensor target = data.stack_target(idx);
    std::vector<int> t(idx.size());
    for (int& v : t) v = pick(rng);
    Tensor eps(target.shape());
    fill_normal(rng, eps.values());
    total += denoising_loss(model, cond, target, t, eps, schedule)->value[0] * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(data.size());
}

DenoiserModel train_denoiser(const LatentDataset& train, const LatentDataset* validation,
                             const NoiseSchedule& schedule, const DenoiserConfig& config,
                             const DenoiserEpochCallback& on_epoch) {
  if (train.size() == 0) throw DataError("paired training set is empty");
  config.validate();
  if (config.steps != schedule.steps)
    throw StateError("schedule has " + std::to_string(schedule.steps) + " steps but the config asks for " +
                     std::to_string(config.steps));
  DenoiserModel model(config);
  nn::Adam adam(model.parameters().vars(), {config.learning_rate, 0.9, 0.999, 1e-8, config.clip_norm});
  Rng rng = make_rng(config.seed, 31);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    int batches = 0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const std::span<const std::size_t> idx(order.data() + b, std::min<std::size_t>(config.batch_size, order.size() - b));
      total += training_step(model, adam, train.stack_cond(idx), train.stack_target(idx), schedule, rng);
      ++batches;
    }
    const double loss = total / batches;
    model.epoch_losses.push_back(loss);
    const double val = validation && validation->size() > 0
                           ? evaluate_denoiser(model, *validation, schedule, config.seed)
                           : std::numeric_limits<double>::quiet_NaN();
    if (on_epoch) on_epoch(epoch, loss, val, model);
  }
  model.parameters().round_to_float();
  return model;
}

}  // namespace pcbct
