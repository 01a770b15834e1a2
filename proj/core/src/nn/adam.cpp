#include "pcbct/nn/adam.hpp"

#include <cmath>

namespace pcbct::nn {

Adam::Adam(std::vector<Var> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const Var& p : params_) {
    m_.emplace_back(p->shape(), 0.0);
    v_.emplace_back(p->shape(), 0.0);
  }
}

void Adam::zero_grad() {
  for (const Var& p : params_)
    if (!p->grad.empty()) p->grad.fill(0.0);
}

double Adam::step() {
  double sq = 0.0;
  for (const Var& p : params_)
    if (!p->grad.empty()) sq += p->grad.squared_norm();
  const double norm = std::sqrt(sq);
  double factor = 1.0;
  if (config_.clip_norm > 0.0 && norm > config_.clip_norm) factor = config_.clip_norm / (norm + 1e-12);

  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Node& p = *params_[k];
    if (p.grad.empty()) continue;
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      const double g = p.grad[i] * factor;
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double mh = m[i] / c1;
      const double vh = v[i] / c2;
      p.value[i] -= config_.learning_rate * mh / (std::sqrt(vh) + config_.epsilon);
    }
  }
  return norm;
}

}  // namespace pcbct::nn
