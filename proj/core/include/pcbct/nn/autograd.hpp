#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "pcbct/nn/tensor.hpp"

namespace pcbct::nn {

class Node;
using Var = std::shared_ptr<Node>;

// One value in the recorded computation. Leaves created by `parameter` carry
// persistent gradients; interior nodes are released with the graph.
class Node {
 public:
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<Var> inputs;
  // Propagates `grad` of this node into its inputs' gradients.
  std::function<void(Node&)> backward_fn;

  // Zero-initialized on first use.
  Tensor& grad_buffer();
  const Shape& shape() const { return value.shape(); }
};

Var constant(Tensor value);
Var parameter(Tensor value);

// True while gradients are recorded (the default).
bool grad_enabled();

// Disables graph recording for its lifetime (inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Output node for an op over `inputs`; records the inputs and backward function
// only when recording is on and some input requires a gradient.
Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn);

// Reverse sweep from a scalar root, accumulating into every reachable gradient.
void backward(const Var& root);

}  // namespace pcbct::nn
