#pragma once

#include "pcbct/nn/autograd.hpp"

namespace pcbct::nn {

// x: (N, Ci, H, W), weight: (Co, Ci, K, K), bias: (Co, 1, 1, 1) or null.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);

Var upsample_nearest2x(const Var& x);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& x, Scalar factor);

// Adds v (N, C, 1, 1) to every pixel of x (N, C, H, W).
Var add_channelwise(const Var& x, const Var& v);

Var concat_channels(const Var& a, const Var& b);

Var silu(const Var& x);
Var sigmoid(const Var& x);

// gamma, beta: (C, 1, 1, 1). C must be divisible by `groups`.
Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, Scalar eps = 1e-5);

// x: (N, Din, 1, 1), weight: (Dout, Din, 1, 1), bias: (Dout, 1, 1, 1).
Var linear(const Var& x, const Var& weight, const Var& bias);

// factor * sum((a - b)^2) as a scalar.
Var sum_squared_error(const Var& a, const Var& b, Scalar factor = 1.0);

// Forward value `replacement`, gradient passed to x unchanged.
Var straight_through(const Var& x, const Tensor& replacement);

}  // namespace pcbct::nn
