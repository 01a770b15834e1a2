#include "pcbct/nn/layers.hpp"

#include <cmath>
#include <random>

#include "pcbct/errors.hpp"

namespace pcbct::nn {

Var ParameterStore::add(const std::string& name, Tensor init) {
  for (const auto& p : params_)
    if (p.name == name) throw ParameterError("duplicate parameter name " + name);
  Var v = parameter(std::move(init));
  params_.push_back({name, v});
  return v;
}

std::vector<Var> ParameterStore::vars() const {
  std::vector<Var> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.var);
  return out;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.var->value.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_)
    if (!p.var->grad.empty()) p.var->grad.fill(0.0);
}

void ParameterStore::round_to_float() {
  for (auto& p : params_)
    for (Scalar& v : p.var->value.values()) v = static_cast<Scalar>(static_cast<float>(v));
}

Tensor uniform_init(Shape shape, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> d(-bound, bound);
  Tensor t(shape);
  for (Scalar& v : t.values()) v = d(rng);
  return t;
}

Conv2d::Conv2d(ParameterStore& store, const std::string& name, int cin, int cout, int kernel, int stride_,
               int pad_, Rng& rng, bool zero_init)
    : stride(stride_), pad(pad_) {
  const int fan_in = cin * kernel * kernel;
  const Shape ws{cout, cin, kernel, kernel};
  const Shape bs{cout, 1, 1, 1};
  weight = store.add(name + ".weight", zero_init ? Tensor(ws) : uniform_init(ws, fan_in, rng));
  bias = store.add(name + ".bias", zero_init ? Tensor(bs) : uniform_init(bs, fan_in, rng));
}

Linear::Linear(ParameterStore& store, const std::string& name, int din, int dout, Rng& rng) {
  weight = store.add(name + ".weight", uniform_init(Shape{dout, din, 1, 1}, din, rng));
  bias = store.add(name + ".bias", uniform_init(Shape{dout, 1, 1, 1}, din, rng));
}

GroupNorm::GroupNorm(ParameterStore& store, const std::string& name, int channels, int groups_) : groups(groups_) {
  gamma = store.add(name + ".gamma", Tensor(Shape{channels, 1, 1, 1}, 1.0));
  beta = store.add(name + ".beta", Tensor(Shape{channels, 1, 1, 1}, 0.0));
}

int group_count(int channels, int preferred) {
  for (int g = std::min(preferred, channels); g > 1; --g)
    if (channels % g == 0) return g;
  return 1;
}

}  // namespace pcbct::nn
