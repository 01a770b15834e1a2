#pragma once

#include <vector>

#include "pcbct/nn/autograd.hpp"

namespace pcbct::nn {

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 0.0;  // global gradient-norm clip; 0 disables
};

class Adam {
 public:
  Adam(std::vector<Var> params, AdamConfig config);

  // Applies one update from the accumulated gradients and returns the global
  // gradient norm before clipping. Gradients are left untouched.
  double step();
  void zero_grad();
  long steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  std::vector<Var> params_;
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  long t_ = 0;
};

}  // namespace pcbct::nn
