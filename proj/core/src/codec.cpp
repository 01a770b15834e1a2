#include "pcbct/codec.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <json.hpp>

#include "pcbct/errors.hpp"
#include "pcbct/nn/adam.hpp"
#include "pcbct/rng.hpp"

namespace pcbct {

using nn::Shape;
using nn::Tensor;
using nn::Var;

void CodecConfig::validate() const {
  if (factor < 2 || (factor & (factor - 1)) != 0) throw ParameterError("codec factor must be a power of two >= 2");
  if (widths.empty()) throw ParameterError("codec widths must be nonempty");
  for (int w : widths)
    if (w < 1) throw ParameterError("codec widths must be positive");
  if (codebook_size < 2) throw ParameterError("codebook needs at least two entries");
  if (!(ema_decay > 0.0 && ema_decay < 1.0)) throw ParameterError("ema_decay must lie in (0, 1)");
  if (batch_size < 1 || max_epochs < 1 || patience < 1) throw ParameterError("invalid codec training schedule");
}

int CodecConfig::levels() const {
  int l = 0;
  for (int f = factor; f > 1; f >>= 1) ++l;
  return l;
}

LatentGrid quantize(const LatentGrid& latent, std::span<const double> codebook) {
  if (codebook.empty()) throw StateError("codebook is empty");
  LatentGrid out = latent;
  for (double& v : out.values) {
    std::size_t best = 0;
    double best_d = std::abs(v - codebook[0]);
    for (std::size_t k = 1; k < codebook.size(); ++k) {
      const double d = std::abs(v - codebook[k]);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    v = codebook[best];
  }
  out.quantized = true;
  return out;
}

namespace {

std::pair<double, double> extrema(std::span<const double> codebook) {
  if (codebook.empty()) throw StateError("codebook is empty");
  const auto [lo, hi] = std::minmax_element(codebook.begin(), codebook.end());
  if (!(*lo < *hi)) throw StateError("degenerate codebook: min equals max");
  return {*lo, *hi};
}

Tensor images_to_tensor(std::span<const Image> images, std::size_t begin, std::size_t count) {
  const Image& first = images[begin];
  Tensor t(Shape{static_cast<int>(count), 1, first.height, first.width});
  for (std::size_t b = 0; b < count; ++b) {
    const Image& img = images[begin + b];
    double* dst = t.sample(static_cast<int>(b));
    for (std::size_t i = 0; i < img.size(); ++i) dst[i] = std::clamp(hu_to_unit(img.pixels[i]), 0.0, 1.0);
  }
  return t;
}

Tensor images_to_tensor(const std::vector<const Image*>& images) {
  const Image& first = *images.front();
  Tensor t(Shape{static_cast<int>(images.size()), 1, first.height, first.width});
  for (std::size_t b = 0; b < images.size(); ++b) {
    double* dst = t.sample(static_cast<int>(b));
    for (std::size_t i = 0; i < images[b]->size(); ++i)
      dst[i] = std::clamp(hu_to_unit(images[b]->pixels[i]), 0.0, 1.0);
  }
  return t;
}

constexpr std::size_t kInferenceBatch = 8;

}  // namespace

LatentGrid normalize_latent(const LatentGrid& latent, std::span<const double> codebook) {
  const auto [lo, hi] = extrema(codebook);
  LatentGrid out = latent;
  for (double& v : out.values) v = 2.0 * (v - lo) / (hi - lo) - 1.0;
  out.normalized = true;
  return out;
}

LatentGrid denormalize_latent(const LatentGrid& latent, std::span<const double> codebook) {
  const auto [lo, hi] = extrema(codebook);
  LatentGrid out = latent;
  for (double& v : out.values) v = (v + 1.0) * 0.5 * (hi - lo) + lo;
  out.normalized = false;
  return out;
}

// Encoder: head conv, then per level a residual block and a stride-2 conv;
// a 1x1 conv maps to the single latent channel. The decoder mirrors it with
// nearest-neighbour upsampling and ends in a sigmoid.
struct CodecModel::Layers {
  struct Residual {
    nn::Conv2d a, b;
    Var operator()(const Var& x) const { return nn::add(x, b(nn::silu(a(nn::silu(x))))); }
  };
  nn::Conv2d enc_head;
  std::vector<Residual> enc_blocks;
  std::vector<nn::Conv2d> enc_down;
  nn::Conv2d enc_out;
  nn::Conv2d dec_head;
  std::vector<nn::Conv2d> dec_up;
  std::vector<Residual> dec_blocks;
  nn::Conv2d dec_out;
};

CodecModel::CodecModel(CodecConfig config)
    : config_(std::move(config)), store_(std::make_shared<nn::ParameterStore>()), layers_(std::make_shared<Layers>()) {
  config_.validate();
  const int levels = config_.levels();
  auto width = [this](int level) {
    return config_.widths[std::min<std::size_t>(level, config_.widths.size() - 1)];
  };
  Rng rng = make_rng(config_.seed, 11);
  nn::ParameterStore& s = *store_;
  Layers& l = *layers_;
  l.enc_head = nn::Conv2d(s, "enc.head", 1, width(0), 3, 1, 1, rng);
  for (int i = 0; i < levels; ++i) {
    const std::string p = "enc.level" + std::to_string(i);
    l.enc_blocks.push_back({nn::Conv2d(s, p + ".block.a", width(i), width(i), 3, 1, 1, rng),
                            nn::Conv2d(s, p + ".block.b", width(i), width(i), 3, 1, 1, rng)});
    l.enc_down.emplace_back(s, p + ".down", width(i), width(i + 1), 3, 2, 1, rng);
  }
  l.enc_out = nn::Conv2d(s, "enc.out", width(levels), 1, 1, 1, 0, rng);
  l.dec_head = nn::Conv2d(s, "dec.head", 1, width(levels), 3, 1, 1, rng);
  for (int i = levels - 1; i >= 0; --i) {
    const std::string p = "dec.level" + std::to_string(i);
    l.dec_up.emplace_back(s, p + ".up", width(i + 1), width(i), 3, 1, 1, rng);
    l.dec_blocks.push_back({nn::Conv2d(s, p + ".block.a", width(i), width(i), 3, 1, 1, rng),
                            nn::Conv2d(s, p + ".block.b", width(i), width(i), 3, 1, 1, rng)});
  }
  l.dec_out = nn::Conv2d(s, "dec.out", width(0), 1, 3, 1, 1, rng);

  codebook_.resize(config_.codebook_size);
  for (int k = 0; k < config_.codebook_size; ++k) codebook_[k] = -1.0 + 2.0 * k / (config_.codebook_size - 1);
}

double CodecModel::codebook_min() const { return extrema(codebook_).first; }
double CodecModel::codebook_max() const { return extrema(codebook_).second; }

void CodecModel::set_codebook(std::vector<double> entries) {
  if (entries.size() < 2) throw StateError("codebook needs at least two entries");
  for (double v : entries)
    if (!std::isfinite(v)) throw StateError("codebook entries must be finite");
  codebook_ = std::move(entries);
  extrema(codebook_);
}

Var CodecModel::encoder_forward(const Var& x) const {
  const Layers& l = *layers_;
  Var h = l.enc_head(x);
  for (std::size_t i = 0; i < l.enc_blocks.size(); ++i) h = l.enc_down[i](l.enc_blocks[i](h));
  return l.enc_out(nn::silu(h));
}

Var CodecModel::decoder_forward(const Var& z) const {
  const Layers& l = *layers_;
  Var h = l.dec_head(z);
  for (std::size_t i = 0; i < l.dec_up.size(); ++i) h = l.dec_blocks[i](l.dec_up[i](nn::upsample_nearest2x(nn::silu(h))));
  return nn::sigmoid(l.dec_out(nn::silu(h)));
}

std::vector<LatentGrid> CodecModel::encode(std::span<const Image> images) const {
  std::vector<LatentGrid> out;
  if (images.empty()) return out;
  const int f = config_.factor;
  for (const Image& img : images) {
    if (img.height % f != 0 || img.width % f != 0)
      throw ParameterError("image size " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                           " is not divisible by compression factor " + std::to_string(f));
    if (!img.same_shape(images.front())) throw ParameterError("encode batch has mixed image sizes");
  }
  nn::NoGradGuard guard;
  for (std::size_t b = 0; b < images.size(); b += kInferenceBatch) {
    const std::size_t count = std::min(kInferenceBatch, images.size() - b);
    const Var z = encoder_forward(nn::constant(images_to_tensor(images, b, count)));
    const Shape zs = z->shape();
    for (int n = 0; n < zs.n; ++n) {
      LatentGrid g{zs.h, zs.w, std::vector<double>(z->value.sample(n), z->value.sample(n) + zs.plane()), false, false};
      out.push_back(std::move(g));
    }
  }
  return out;
}

LatentGrid CodecModel::encode(const Image& image) const { return encode(std::span<const Image>(&image, 1)).front(); }

std::vector<Image> CodecModel::decode(std::span<const LatentGrid> latents, double fov_radius) const {
  std::vector<Image> out;
  if (latents.empty()) return out;
  for (const LatentGrid& g : latents) {
    if (g.height != latents.front().height || g.width != latents.front().width || g.height < 1 || g.width < 1 ||
        g.values.size() != static_cast<std::size_t>(g.height) * g.width)
      throw ParameterError("decode batch has inconsistent latent shapes");
    if (g.normalized) throw ParameterError("decode expects a denormalized latent");
  }
  nn::NoGradGuard guard;
  for (std::size_t b = 0; b < latents.size(); b += kInferenceBatch) {
    const std::size_t count = std::min(kInferenceBatch, latents.size() - b);
    Tensor t(Shape{static_cast<int>(count), 1, latents[b].height, latents[b].width});
    for (std::size_t i = 0; i < count; ++i)
      std::copy(latents[b + i].values.begin(), latents[b + i].values.end(), t.sample(static_cast<int>(i)));
    const Var y = decoder_forward(nn::constant(std::move(t)));
    const Shape ys = y->shape();
    for (int n = 0; n < ys.n; ++n) {
      Image img(ys.h, ys.w, fov_radius);
      const double* src = y->value.sample(n);
      for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = static_cast<float>(unit_to_hu(src[i]));
      clamp_and_mask(img);
      out.push_back(std::move(img));
    }
  }
  return out;
}

Image CodecModel::decode(const LatentGrid& latent, double fov_radius) const {
  return decode(std::span<const LatentGrid>(&latent, 1), fov_radius).front();
}

Image CodecModel::reconstruct(const Image& image) const { return decode(quantize(encode(image)), image.fov_radius); }

nn::Checkpoint CodecModel::to_checkpoint() const {
  nlohmann::json meta;
  meta["factor"] = config_.factor;
  meta["widths"] = config_.widths;
  meta["codebook_size"] = codebook_.size();
  meta["codebook_min"] = codebook_min();
  meta["codebook_max"] = codebook_max();
  meta["commitment"] = config_.commitment;
  meta["seed"] = config_.seed;
  meta["best_epoch"] = log_.best_epoch;
  meta["train_loss"] = log_.train_loss;
  meta["validation_loss"] = log_.validation_loss;
  nn::Checkpoint c = nn::capture(*store_, "codec", meta.dump());
  nn::CheckpointTensor cb{"codebook", Shape{static_cast<int>(codebook_.size()), 1, 1, 1}, {}};
  for (double v : codebook_) cb.values.push_back(static_cast<float>(v));
  c.tensors.push_back(std::move(cb));
  return c;
}

CodecModel CodecModel::from_checkpoint(const nn::Checkpoint& ckpt) {
  if (ckpt.kind != "codec") throw StateError("checkpoint kind is '" + ckpt.kind + "', expected 'codec'");
  const auto meta = nlohmann::json::parse(ckpt.meta_json);
  CodecConfig cfg;
  cfg.factor = meta.at("factor").get<int>();
  cfg.widths = meta.at("widths").get<std::vector<int>>();
  cfg.codebook_size = meta.at("codebook_size").get<int>();
  cfg.commitment = meta.value("commitment", cfg.commitment);
  cfg.seed = meta.value("seed", std::uint64_t{0});
  CodecModel model(cfg);
  nn::restore(model.parameters(), ckpt);
  const auto& cb = ckpt.tensor("codebook");
  model.set_codebook(std::vector<double>(cb.values.begin(), cb.values.end()));
  model.log_.best_epoch = meta.value("best_epoch", 0);
  model.log_.train_loss = meta.value("train_loss", std::vector<double>{});
  model.log_.validation_loss = meta.value("validation_loss", std::vector<double>{});
  return model;
}

namespace {

// Exponential-moving-average codebook with dead-code restarts.
class EmaCodebook {
 public:
  EmaCodebook(const CodecConfig& cfg, Rng& rng) : cfg_(cfg), rng_(rng) {}

  void initialize(std::vector<double>& codebook, std::span<const double> latents) {
    std::vector<double> sorted(latents.begin(), latents.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t k = codebook.size();
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t idx = std::min(sorted.size() - 1, (i * (sorted.size() - 1)) / std::max<std::size_t>(1, k - 1));
      codebook[i] = sorted[idx];
    }
    counts_.assign(k, 0.0);
    sums_.assign(k, 0.0);
    idle_.assign(k, 0);
    spread(codebook);
  }

  void update(std::vector<double>& codebook, std::span<const double> latents, std::span<const double> quantized) {
    const std::size_t k = codebook.size();
    std::vector<double> n(k, 0.0), s(k, 0.0);
    for (std::size_t i = 0; i < latents.size(); ++i) {
      const std::size_t idx = index_of(codebook, quantized[i]);
      n[idx] += 1.0;
      s[idx] += latents[i];
    }
    const double d = cfg_.ema_decay;
    std::uniform_int_distribution<std::size_t> pick(0, latents.size() - 1);
    for (std::size_t j = 0; j < k; ++j) {
      counts_[j] = d * counts_[j] + (1.0 - d) * n[j];
      sums_[j] = d * sums_[j] + (1.0 - d) * s[j];
      if (counts_[j] > 1e-12) codebook[j] = sums_[j] / counts_[j];
      idle_[j] = n[j] > 0.0 ? 0 : idle_[j] + 1;
      if (idle_[j] >= cfg_.dead_code_steps) {
        codebook[j] = latents[pick(rng_)];
        counts_[j] = 0.0;
        sums_[j] = 0.0;
        idle_[j] = 0;
      }
    }
    spread(codebook);
  }

 private:
  static std::size_t index_of(const std::vector<double>& codebook, double value) {
    for (std::size_t j = 0; j < codebook.size(); ++j)
      if (codebook[j] == value) return j;
    return 0;
  }

  // Keeps min < max even if all latents collapse to one value.
  static void spread(std::vector<double>& codebook) {
    const auto [lo, hi] = std::minmax_element(codebook.begin(), codebook.end());
    if (*hi - *lo < 1e-6) {
      const double mid = 0.5 * (*hi + *lo);
      codebook.front() = mid - 1e-3;
      codebook.back() = mid + 1e-3;
    }
  }

  const CodecConfig& cfg_;
  Rng& rng_;
  std::vector<double> counts_, sums_;
  std::vector<int> idle_;
};

double validation_mse(const CodecModel& model, std::span<const Image> validation) {
  nn::NoGradGuard guard;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t b = 0; b < validation.size(); b += kInferenceBatch) {
    const std::size_t n = std::min(kInferenceBatch, validation.size() - b);
    const Tensor x = images_to_tensor(validation, b, n);
    const Var z = model.encoder_forward(nn::constant(x));
    LatentGrid g{1, static_cast<int>(z->value.numel()), std::vector<double>(z->value.values().begin(), z->value.values().end())};
    const LatentGrid q = model.quantize(g);
    const Var y = model.decoder_forward(nn::constant(Tensor(z->shape(), q.values)));
    for (std::size_t i = 0; i < x.numel(); ++i) total += (y->value[i] - x[i]) * (y->value[i] - x[i]);
    count += x.numel();
  }
  return total / static_cast<double>(count);
}

}  // namespace

CodecModel train_codec(std::span<const Image> train, std::span<const Image> validation, const CodecConfig& config,
                       const EpochCallback& on_epoch) {
  if (train.empty()) throw DataError("codec training set is empty");
  if (validation.empty()) throw DataError("codec validation set is empty");
  config.validate();
  for (const Image& img : train)
    if (!img.same_shape(train.front())) throw DataError("codec training images differ in size");
  if (train.front().height % config.factor != 0 || train.front().width % config.factor != 0)
    throw ParameterError("image size is not divisible by the compression factor");

  CodecModel model(config);
  Rng rng = make_rng(config.seed, 12);
  nn::Adam adam(model.parameters().vars(), {config.learning_rate, 0.9, 0.999, 1e-8, config.clip_norm});
  EmaCodebook ema(config, rng);
  std::vector<double> codebook = model.codebook();
  bool initialized = false;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  double best = std::numeric_limits<double>::infinity();
  nn::Checkpoint best_state = model.to_checkpoint();
  int since_best = 0;
  CodecTrainingLog log;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      std::vector<const Image*> batch;
      for (std::size_t i = b; i < std::min(order.size(), b + config.batch_size); ++i) batch.push_back(&train[order[i]]);
      const Var x = nn::constant(images_to_tensor(batch));
      const Var z = model.encoder_forward(x);

      if (!initialized) {
        ema.initialize(codebook, z->value.values());
        model.set_codebook(codebook);
        initialized = true;
      }
      LatentGrid g{1, static_cast<int>(z->value.numel()),
                   std::vector<double>(z->value.values().begin(), z->value.values().end())};
      const LatentGrid q = model.quantize(g);
      const Tensor qt(z->shape(), q.values);

      const Var y = model.decoder_forward(nn::straight_through(z, qt));
      const Var recon = nn::sum_squared_error(y, x, 1.0 / static_cast<double>(x->value.numel()));
      const Var commit =
          nn::sum_squared_error(z, nn::constant(qt), config.commitment / static_cast<double>(z->value.numel()));
      const Var loss = nn::add(recon, commit);
      adam.zero_grad();
      nn::backward(loss);
      adam.step();
      ema.update(codebook, z->value.values(), q.values);
      model.set_codebook(codebook);
      epoch_loss += loss->value[0];
      ++batches;
    }
    epoch_loss /= batches;
    const double val = validation_mse(model, validation);
    log.train_loss.push_back(epoch_loss);
    log.validation_loss.push_back(val);
    if (on_epoch) on_epoch(epoch, epoch_loss, val);
    if (val < best) {
      best = val;
      log.best_epoch = epoch;
      model.parameters().round_to_float();
      best_state = model.to_checkpoint();
      since_best = 0;
    } else if (++since_best >= config.patience) {
      log.early_stopped = true;
      break;
    }
  }

  CodecModel out = CodecModel::from_checkpoint(best_state);
  out.log() = log;
  return out;
}

CodecModel train_codec(std::span<const Image> dataset, int factor, CodecConfig config, const EpochCallback& on_epoch) {
  if (dataset.empty()) throw DataError("codec dataset is empty");
  config.factor = factor;
  std::vector<Image> train, validation;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset.size() > 1 && i % 10 == 9) {
      validation.push_back(dataset[i]);
    } else {
      train.push_back(dataset[i]);
    }
  }
  if (validation.empty()) validation.push_back(dataset.back());
  return train_codec(train, validation, config, on_epoch);
}

}  // namespace pcbct
