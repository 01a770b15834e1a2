#include "pcbct/nn/tensor.hpp"

#include <algorithm>

#include "pcbct/errors.hpp"

namespace pcbct::nn {

std::string Shape::str() const {
  return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) + ", " + std::to_string(w) + ")";
}

Tensor::Tensor(Shape shape, Scalar fill) : shape_(shape), data_(shape.numel(), fill) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) throw ParameterError("negative tensor extent");
}

Tensor::Tensor(Shape shape, std::vector<Scalar> values) : shape_(shape), data_(std::move(values)) {
  if (data_.size() != shape.numel()) throw ParameterError("tensor value count does not match shape " + shape.str());
}

void Tensor::fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }

Scalar Tensor::sum() const {
  Scalar s = 0.0;
  for (Scalar v : data_) s += v;
  return s;
}

Scalar Tensor::squared_norm() const {
  Scalar s = 0.0;
  for (Scalar v : data_) s += v * v;
  return s;
}

}  // namespace pcbct::nn
