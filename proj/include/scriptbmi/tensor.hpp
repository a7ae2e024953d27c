#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "scriptbmi/errors.hpp"

namespace scriptbmi {

// Dense n-dimensional array of doubles, row-major.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);

  static Tensor full(std::vector<std::size_t> shape, double value) {
    return Tensor(std::move(shape), value);
  }
  static Tensor scalar(double value) { return Tensor({1}, value); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t extent(std::size_t dim) const { return shape_.at(dim); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  // Strided flat index; bounds are the caller's responsibility in hot paths.
  std::size_t flat_index(std::span<const std::size_t> idx) const;

  template <typename... Ix>
  double& operator()(Ix... ix) {
    const std::size_t idx[] = {static_cast<std::size_t>(ix)...};
    return data_[flat_index(std::span<const std::size_t>(idx, sizeof...(Ix)))];
  }
  template <typename... Ix>
  double operator()(Ix... ix) const {
    const std::size_t idx[] = {static_cast<std::size_t>(ix)...};
    return data_[flat_index(std::span<const std::size_t>(idx, sizeof...(Ix)))];
  }

  // Same data, new shape; element counts must agree.
  Tensor reshaped(std::vector<std::size_t> new_shape) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Standard matrix product of rank-2 tensors, [M,K] x [K,N] -> [M,N].
Tensor matmul(const Tensor& a, const Tensor& b);

// a[M,N] x b[K,N]^T -> [M,K]; dot-product form, both operands row-contiguous.
Tensor matmul_transposed_b(const Tensor& a, const Tensor& b);

// a[M,K]^T x b[M,N] -> [K,N].
Tensor matmul_transposed_a(const Tensor& a, const Tensor& b);

std::string shape_to_string(std::span<const std::size_t> shape);

}  // namespace scriptbmi
