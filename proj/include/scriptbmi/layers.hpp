#pragma once

#include <cstddef>
#include <vector>

#include "scriptbmi/rng.hpp"
#include "scriptbmi/tensor.hpp"

namespace scriptbmi::nn {

enum class Mode { Train, Eval };

// 3x3 kernels only; weights [out_ch, in_ch, 3, 3], bias [out_ch].
struct ConvParams {
  Tensor weights;
  Tensor bias;
};

// weights [out_units, in_units], bias [out_units].
struct DenseParams {
  Tensor weights;
  Tensor bias;
};

struct ConvCache {
  Tensor input;
};

struct PoolCache {
  std::vector<std::size_t> input_shape;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

struct ReluCache {
  Tensor input;
};

struct DropoutCache {
  Tensor mask;  // 1 = kept
  double rate = 0.0;
  bool identity = true;  // eval mode or rate 0
};

struct DenseCache {
  Tensor input;
};

struct ConvGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

struct DenseGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

// Stride-1 zero-padded "same" convolution; output spatial size equals input.
// x is [B, Cin, H, W], result [B, Cout, H, W]. im2col + matmul inside.
Tensor conv2d_forward(const Tensor& x, const ConvParams& p, ConvCache& cache);

// Direct-loop implementation of the same map, kept for cross-checking.
Tensor conv2d_forward_reference(const Tensor& x, const ConvParams& p);

ConvGrads conv2d_backward(const Tensor& grad_out, const ConvCache& cache, const ConvParams& p);

// 2x2 window, stride 2, floor semantics: trailing odd row/column dropped.
// Ties go to the first maximal element in row-major window order.
Tensor maxpool_forward(const Tensor& x, PoolCache& cache);
Tensor maxpool_backward(const Tensor& grad_out, const PoolCache& cache);

// Elementwise max(0, x); gradient at exactly 0 is 0.
Tensor relu(const Tensor& x, ReluCache* cache = nullptr);
Tensor relu_backward(const Tensor& grad_out, const ReluCache& cache);

// Inverted dropout: train mode zeroes with probability `rate` and scales
// survivors by 1/(1-rate); eval mode is the identity. Rate 0 consumes no
// randomness.
Tensor dropout(const Tensor& x, double rate, Mode mode, RngStream& stream, DropoutCache& cache);
Tensor dropout_backward(const Tensor& grad_out, const DropoutCache& cache);

// [B, C, H, W] -> [B, C*H*W], row-major data order preserved.
Tensor flatten(const Tensor& x);
Tensor unflatten(const Tensor& x, std::vector<std::size_t> shape);

// y = x W^T + b for x [B, K].
Tensor dense_forward(const Tensor& x, const DenseParams& p, DenseCache& cache);
DenseGrads dense_backward(const Tensor& grad_out, const DenseCache& cache, const DenseParams& p);

// Rowwise softmax with max subtraction.
Tensor softmax(const Tensor& logits);

// Gaussian init with std sqrt(2 / fan_in).
Tensor he_init(std::vector<std::size_t> shape, std::size_t fan_in, RngStream& stream);

}  // namespace scriptbmi::nn
