#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace pcbct::nn {

using Scalar = double;

// NCHW extents; dense activations use (N, D, 1, 1).
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
           static_cast<std::size_t>(w);
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Scalar fill = 0.0);
  Tensor(Shape shape, std::vector<Scalar> values);

  const Shape& shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  std::span<Scalar> values() { return data_; }
  std::span<const Scalar> values() const { return data_; }

  Scalar& operator[](std::size_t i) { return data_[i]; }
  Scalar operator[](std::size_t i) const { return data_[i]; }
  Scalar& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  Scalar at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

  void fill(Scalar v);
  // Pointer to sample n (its C*H*W block).
  Scalar* sample(int n) { return data_.data() + static_cast<std::size_t>(n) * sample_size(); }
  const Scalar* sample(int n) const { return data_.data() + static_cast<std::size_t>(n) * sample_size(); }
  std::size_t sample_size() const { return static_cast<std::size_t>(shape_.c) * shape_.plane(); }

  Scalar sum() const;
  Scalar squared_norm() const;

 private:
  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }

  Shape shape_{0, 0, 0, 0};
  std::vector<Scalar> data_;
};

}  // namespace pcbct::nn
