#include "pcbct/unet.hpp"

#include <cmath>
#include <string>

#include <json.hpp>

#include "pcbct/errors.hpp"
#include "pcbct/rng.hpp"

namespace pcbct {

using nn::Shape;
using nn::Tensor;
using nn::Var;

void DenoiserConfig::validate() const {
  if (widths.empty()) throw ParameterError("denoiser widths must be nonempty");
  for (int w : widths)
    if (w < 1) throw ParameterError("denoiser widths must be positive");
  if (embedding_dim < 2 || embedding_dim % 2 != 0) throw ParameterError("embedding_dim must be even and >= 2");
  if (groups < 1) throw ParameterError("groups must be positive");
  if (steps < 1) throw ParameterError("steps must be >= 1");
  if (!(learning_rate > 0.0)) throw ParameterError("learning_rate must be positive");
  if (batch_size < 1 || epochs < 0) throw ParameterError("invalid denoiser training schedule");
}

Tensor noise_level_embedding(std::span<const double> levels, int dim) {
  const int half = dim / 2;
  Tensor out(Shape{static_cast<int>(levels.size()), dim, 1, 1});
  for (std::size_t n = 0; n < levels.size(); ++n) {
    const double pos = 1000.0 * levels[n];
    for (int k = 0; k < half; ++k) {
      const double freq = std::exp(-std::log(10000.0) * k / std::max(1, half - 1));
      out.at(static_cast<int>(n), k, 0, 0) = std::sin(pos * freq);
      out.at(static_cast<int>(n), half + k, 0, 0) = std::cos(pos * freq);
    }
  }
  return out;
}

namespace {

struct ResBlock {
  nn::GroupNorm norm1, norm2;
  nn::Conv2d conv1, conv2;
  nn::Linear emb;
  nn::Conv2d skip;
  bool has_skip = false;

  ResBlock(nn::ParameterStore& s, const std::string& name, int cin, int cout, int emb_dim, int groups, Rng& rng)
      : norm1(s, name + ".norm1", cin, nn::group_count(cin, groups)),
        norm2(s, name + ".norm2", cout, nn::group_count(cout, groups)),
        conv1(s, name + ".conv1", cin, cout, 3, 1, 1, rng),
        conv2(s, name + ".conv2", cout, cout, 3, 1, 1, rng),
        emb(s, name + ".emb", emb_dim, cout, rng) {
    if (cin != cout) {
      skip = nn::Conv2d(s, name + ".skip", cin, cout, 1, 1, 0, rng);
      has_skip = true;
    }
  }

  Var operator()(const Var& x, const Var& e) const {
    Var h = conv1(nn::silu(norm1(x)));
    h = nn::add_channelwise(h, emb(e));
    h = conv2(nn::silu(norm2(h)));
    return nn::add(has_skip ? skip(x) : x, h);
  }
};

}  // namespace

struct DenoiserModel::Layers {
  nn::Linear emb1, emb2;
  nn::Conv2d in;
  std::vector<ResBlock> down;
  std::vector<nn::Conv2d> downsample;
  std::vector<ResBlock> mid;
  std::vector<ResBlock> up;
  std::vector<nn::Conv2d> upsample;
  nn::GroupNorm out_norm;
  nn::Conv2d out;
};

DenoiserModel::DenoiserModel(DenoiserConfig config)
    : config_(std::move(config)), store_(std::make_shared<nn::ParameterStore>()), layers_(std::make_shared<Layers>()) {
  config_.validate();
  Rng rng = make_rng(config_.seed, 21);
  nn::ParameterStore& s = *store_;
  Layers& l = *layers_;
  const auto& w = config_.widths;
  const int depth = config_.depth();
  const int e = config_.embedding_dim;
  const int g = config_.groups;

  l.emb1 = nn::Linear(s, "emb.fc1", e, 2 * e, rng);
  l.emb2 = nn::Linear(s, "emb.fc2", 2 * e, e, rng);
  l.in = nn::Conv2d(s, "in", 2, w[0], 3, 1, 1, rng);
  for (int i = 0; i < depth; ++i) {
    const int cin = i == 0 ? w[0] : w[i - 1];
    l.down.emplace_back(s, "down" + std::to_string(i), cin, w[i], e, g, rng);
    if (i + 1 < depth) l.downsample.emplace_back(s, "down" + std::to_string(i) + ".pool", w[i], w[i], 3, 2, 1, rng);
  }
  l.mid.emplace_back(s, "mid", w[depth - 1], w[depth - 1], e, g, rng);
  for (int i = depth - 1; i >= 0; --i) {
    l.up.emplace_back(s, "up" + std::to_string(i), 2 * w[i], w[i], e, g, rng);
    if (i > 0) l.upsample.emplace_back(s, "up" + std::to_string(i) + ".unpool", w[i], w[i - 1], 3, 1, 1, rng);
  }
  l.out_norm = nn::GroupNorm(s, "out.norm", w[0], nn::group_count(w[0], g));
  l.out = nn::Conv2d(s, "out", w[0], 1, 3, 1, 1, rng, /*zero_init=*/true);
}

Var DenoiserModel::forward(const Var& cond, const Var& noisy, std::span<const double> sqrt_gamma) const {
  const Shape cs = cond->shape();
  if (!(cs == noisy->shape()) || cs.c != 1)
    throw ParameterError("denoiser inputs must share a single-channel shape, got " + cs.str() + " and " +
                         noisy->shape().str());
  if (sqrt_gamma.size() != static_cast<std::size_t>(cs.n)) throw ParameterError("one noise level per sample required");
  const int m = config_.size_multiple();
  if (cs.h % m != 0 || cs.w % m != 0)
    throw ParameterError("latent size " + std::to_string(cs.h) + "x" + std::to_string(cs.w) +
                         " is not divisible by " + std::to_string(m));

  const Layers& l = *layers_;
  const Var e = l.emb2(nn::silu(l.emb1(nn::constant(noise_level_embedding(sqrt_gamma, config_.embedding_dim)))));
  Var h = l.in(nn::concat_channels(cond, noisy));
  std::vector<Var> skips;
  const int depth = config_.depth();
  for (int i = 0; i < depth; ++i) {
    h = l.down[i](h, e);
    skips.push_back(h);
    if (i + 1 < depth) h = l.downsample[i](h);
  }
  h = l.mid[0](h, e);
  for (int j = 0; j < depth; ++j) {
    const int i = depth - 1 - j;
    h = l.up[j](nn::concat_channels(h, skips[i]), e);
    if (i > 0) h = l.upsample[j](nn::upsample_nearest2x(h));
  }
  return l.out(nn::silu(l.out_norm(h)));
}

Tensor DenoiserModel::predict(const Tensor& cond, const Tensor& noisy, std::span<const double> sqrt_gamma) const {
  nn::NoGradGuard guard;
  return forward(nn::constant(cond), nn::constant(noisy), sqrt_gamma)->value;
}

nn::Checkpoint DenoiserModel::to_checkpoint() const {
  nlohmann::json meta;
  meta["widths"] = config_.widths;
  meta["embedding_dim"] = config_.embedding_dim;
  meta["groups"] = config_.groups;
  meta["steps"] = config_.steps;
  meta["delta"] = config_.delta;
  meta["tau"] = config_.tau;
  meta["learning_rate"] = config_.learning_rate;
  meta["clip_norm"] = config_.clip_norm;
  meta["batch_size"] = config_.batch_size;
  meta["epochs"] = config_.epochs;
  meta["seed"] = config_.seed;
  meta["epoch_losses"] = epoch_losses;
  return nn::capture(*store_, "cldm", meta.dump());
}

DenoiserModel DenoiserModel::from_checkpoint(const nn::Checkpoint& ckpt) {
  if (ckpt.kind != "cldm") throw StateError("checkpoint kind is '" + ckpt.kind + "', expected 'cldm'");
  const auto meta = nlohmann::json::parse(ckpt.meta_json);
  DenoiserConfig cfg;
  cfg.widths = meta.at("widths").get<std::vector<int>>();
  cfg.embedding_dim = meta.at("embedding_dim").get<int>();
  cfg.groups = meta.at("groups").get<int>();
  cfg.steps = meta.at("steps").get<int>();
  cfg.delta = meta.value("delta", cfg.delta);
  cfg.tau = meta.value("tau", cfg.tau);
  cfg.learning_rate = meta.value("learning_rate", cfg.learning_rate);
  cfg.clip_norm = meta.value("clip_norm", cfg.clip_norm);
  cfg.batch_size = meta.value("batch_size", cfg.batch_size);
  cfg.epochs = meta.value("epochs", cfg.epochs);
  cfg.seed = meta.value("seed", std::uint64_t{0});
  DenoiserModel model(cfg);
  nn::restore(model.parameters(), ckpt);
  model.epoch_losses = meta.value("epoch_losses", std::vector<double>{});
  return model;
}

}  // namespace pcbct
