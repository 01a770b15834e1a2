#pragma once

#include <string>
#include <vector>

#include "pcbct/nn/ops.hpp"
#include "pcbct/rng.hpp"

namespace pcbct::nn {

struct NamedParameter {
  std::string name;
  Var var;
};

// Ordered registry of trainable tensors; order defines checkpoint layout.
class ParameterStore {
 public:
  Var add(const std::string& name, Tensor init);
  const std::vector<NamedParameter>& all() const { return params_; }
  std::vector<Var> vars() const;
  std::size_t scalar_count() const;
  void zero_grad();
  // Rounds every weight to the nearest 32-bit float so in-memory weights
  // equal what a checkpoint stores.
  void round_to_float();

 private:
  std::vector<NamedParameter> params_;
};

// Uniform in +-1/sqrt(fan_in).
Tensor uniform_init(Shape shape, int fan_in, Rng& rng);

struct Conv2d {
  Var weight;
  Var bias;
  int stride = 1;
  int pad = 0;

  Conv2d() = default;
  Conv2d(ParameterStore& store, const std::string& name, int cin, int cout, int kernel, int stride, int pad,
         Rng& rng, bool zero_init = false);
  Var operator()(const Var& x) const { return conv2d(x, weight, bias, stride, pad); }
};

struct Linear {
  Var weight;
  Var bias;

  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, int din, int dout, Rng& rng);
  Var operator()(const Var& x) const { return linear(x, weight, bias); }
};

struct GroupNorm {
  Var gamma;
  Var beta;
  int groups = 1;

  GroupNorm() = default;
  GroupNorm(ParameterStore& store, const std::string& name, int channels, int groups);
  Var operator()(const Var& x) const { return group_norm(x, gamma, beta, groups); }
};

// Largest divisor of `channels` not exceeding `preferred`.
int group_count(int channels, int preferred = 8);

}  // namespace pcbct::nn
