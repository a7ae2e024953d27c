#include "scriptbmi/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "scriptbmi/parallel.hpp"

namespace scriptbmi::nn {

namespace {

void require_rank4(const Tensor& t, const char* name) {
  if (t.rank() != 4) {
    throw ShapeError(std::string(name) + " must be rank-4 [B,C,H,W], got " +
                     shape_to_string(t.shape()));
  }
}

void require_conv_params(const ConvParams& p) {
  if (p.weights.rank() != 4 || p.weights.extent(2) != 3 || p.weights.extent(3) != 3) {
    throw ShapeError("conv weights must be [out,in,3,3], got " +
                     shape_to_string(p.weights.shape()));
  }
  if (p.bias.rank() != 1 || p.bias.extent(0) != p.weights.extent(0)) {
    throw ShapeError("conv bias must be [out], got " + shape_to_string(p.bias.shape()));
  }
}

// cols is [C*9, B*H*W]; row (c,ky,kx), column (b,y,x). Out-of-bounds taps
// read the zero padding.
void im2col_3x3(const double* x, std::size_t batch, std::size_t channels, std::size_t h,
                std::size_t w, double* cols) {
  const std::size_t plane = h * w;
  const std::size_t n = batch * plane;
  parallel_for(channels * 9, [&](std::size_t rlo, std::size_t rhi) {
    for (std::size_t r = rlo; r < rhi; ++r) {
      const std::size_t c = r / 9;
      const int ky = static_cast<int>((r / 3) % 3) - 1;
      const int kx = static_cast<int>(r % 3) - 1;
      double* dst = cols + r * n;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* src_plane = x + (b * channels + c) * plane;
        for (std::size_t y = 0; y < h; ++y) {
          double* drow = dst + (b * h + y) * w;
          const long sy = static_cast<long>(y) + ky;
          if (sy < 0 || sy >= static_cast<long>(h)) {
            std::fill(drow, drow + w, 0.0);
            continue;
          }
          const double* srow = src_plane + static_cast<std::size_t>(sy) * w;
          if (kx == 0) {
            std::copy(srow, srow + w, drow);
          } else if (kx < 0) {
            drow[0] = 0.0;
            std::copy(srow, srow + w - 1, drow + 1);
          } else {
            std::copy(srow + 1, srow + w, drow);
            drow[w - 1] = 0.0;
          }
        }
      }
    }
  });
}

// Scatter-add transpose of im2col. Workers own disjoint batch items; within
// one item the (r, y, x) order is fixed, so sums are deterministic.
void col2im_3x3(const double* cols, std::size_t batch, std::size_t channels, std::size_t h,
                std::size_t w, double* grad_x) {
  const std::size_t plane = h * w;
  const std::size_t n = batch * plane;
  parallel_for(batch, [&](std::size_t blo, std::size_t bhi) {
    for (std::size_t b = blo; b < bhi; ++b) {
      for (std::size_t r = 0; r < channels * 9; ++r) {
        const std::size_t c = r / 9;
        const int ky = static_cast<int>((r / 3) % 3) - 1;
        const int kx = static_cast<int>(r % 3) - 1;
        const double* src = cols + r * n + b * plane;
        double* dplane = grad_x + (b * channels + c) * plane;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + ky;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          const double* srow = src + y * w;
          double* drow = dplane + static_cast<std::size_t>(sy) * w;
          if (kx == 0) {
            for (std::size_t i = 0; i < w; ++i) drow[i] += srow[i];
          } else if (kx < 0) {
            for (std::size_t i = 1; i < w; ++i) drow[i - 1] += srow[i];
          } else {
            for (std::size_t i = 0; i + 1 < w; ++i) drow[i + 1] += srow[i];
          }
        }
      }
    }
  });
}

// Batch chunking caps the size of the transient im2col buffer.
std::size_t conv_chunk(std::size_t batch, std::size_t channels, std::size_t plane) {
  constexpr std::size_t kBudgetBytes = 64ull << 20;
  const std::size_t per_item = channels * 9 * plane * sizeof(double);
  const std::size_t chunk = std::max<std::size_t>(1, kBudgetBytes / std::max<std::size_t>(1, per_item));
  return std::min(batch, chunk);
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const ConvParams& p, ConvCache& cache) {
  require_rank4(x, "conv input");
  require_conv_params(p);
  const std::size_t batch = x.extent(0), cin = x.extent(1), h = x.extent(2), w = x.extent(3);
  const std::size_t cout = p.weights.extent(0);
  if (p.weights.extent(1) != cin) {
    throw ShapeError("conv input channels " + std::to_string(cin) +
                     " do not match weights " + shape_to_string(p.weights.shape()));
  }
  cache.input = x;

  const std::size_t plane = h * w;
  const std::size_t k = cin * 9;
  const Tensor w_mat = p.weights.reshaped({cout, k});
  Tensor out({batch, cout, h, w});

  const std::size_t chunk = conv_chunk(batch, cin, plane);
  for (std::size_t b0 = 0; b0 < batch; b0 += chunk) {
    const std::size_t bn = std::min(chunk, batch - b0);
    Tensor cols({k, bn * plane});
    im2col_3x3(x.data() + b0 * cin * plane, bn, cin, h, w, cols.data());
    Tensor out_mat = matmul(w_mat, cols);  // [cout, bn*plane]
    const double* om = out_mat.data();
    parallel_for(bn, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t b = lo; b < hi; ++b) {
        for (std::size_t co = 0; co < cout; ++co) {
          const double bias = p.bias[co];
          const double* src = om + co * bn * plane + b * plane;
          double* dst = out.data() + ((b0 + b) * cout + co) * plane;
          for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] + bias;
        }
      }
    });
  }
  return out;
}

Tensor conv2d_forward_reference(const Tensor& x, const ConvParams& p) {
  require_rank4(x, "conv input");
  require_conv_params(p);
  const std::size_t batch = x.extent(0), cin = x.extent(1), h = x.extent(2), w = x.extent(3);
  const std::size_t cout = p.weights.extent(0);
  if (p.weights.extent(1) != cin) {
    throw ShapeError("conv input channels do not match weights");
  }
  Tensor out({batch, cout, h, w});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t co = 0; co < cout; ++co) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t xx = 0; xx < w; ++xx) {
          double acc = p.bias[co];
          for (std::size_t ci = 0; ci < cin; ++ci) {
            for (int ky = -1; ky <= 1; ++ky) {
              for (int kx = -1; kx <= 1; ++kx) {
                const long sy = static_cast<long>(y) + ky;
                const long sx = static_cast<long>(xx) + kx;
                if (sy < 0 || sy >= static_cast<long>(h) || sx < 0 || sx >= static_cast<long>(w)) {
                  continue;
                }
                acc += x(b, ci, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx)) *
                       p.weights(co, ci, static_cast<std::size_t>(ky + 1),
                                 static_cast<std::size_t>(kx + 1));
              }
            }
          }
          out(b, co, y, xx) = acc;
        }
      }
    }
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& grad_out, const ConvCache& cache, const ConvParams& p) {
  require_rank4(grad_out, "conv grad_out");
  require_conv_params(p);
  const Tensor& x = cache.input;
  if (x.rank() != 4) {
    throw ShapeError("conv backward needs the cache of a prior forward pass");
  }
  const std::size_t batch = x.extent(0), cin = x.extent(1), h = x.extent(2), w = x.extent(3);
  const std::size_t cout = p.weights.extent(0);
  if (grad_out.extent(0) != batch || grad_out.extent(1) != cout || grad_out.extent(2) != h ||
      grad_out.extent(3) != w) {
    throw ShapeError("conv grad_out shape " + shape_to_string(grad_out.shape()) +
                     " does not match forward output");
  }

  const std::size_t plane = h * w;
  const std::size_t k = cin * 9;
  const Tensor w_mat = p.weights.reshaped({cout, k});

  ConvGrads grads;
  grads.input = Tensor({batch, cin, h, w});
  grads.weights = Tensor({cout, k});
  grads.bias = Tensor({cout});

  // Bias gradient: plain sum over batch and spatial dims per channel.
  parallel_for(cout, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t co = lo; co < hi; ++co) {
      double acc = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* g = grad_out.data() + (b * cout + co) * plane;
        for (std::size_t i = 0; i < plane; ++i) acc += g[i];
      }
      grads.bias[co] = acc;
    }
  });

  const std::size_t chunk = conv_chunk(batch, cin, plane);
  for (std::size_t b0 = 0; b0 < batch; b0 += chunk) {
    const std::size_t bn = std::min(chunk, batch - b0);
    const std::size_t n = bn * plane;

    Tensor g_mat({cout, n});
    parallel_for(cout, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t co = lo; co < hi; ++co) {
        for (std::size_t b = 0; b < bn; ++b) {
          const double* src = grad_out.data() + ((b0 + b) * cout + co) * plane;
          std::copy(src, src + plane, g_mat.data() + co * n + b * plane);
        }
      }
    });

    Tensor cols({k, n});
    im2col_3x3(x.data() + b0 * cin * plane, bn, cin, h, w, cols.data());

    // grad_W accumulates chunk by chunk in batch order.
    Tensor gw = matmul_transposed_b(g_mat, cols);  // [cout, k]
    for (std::size_t i = 0; i < gw.size(); ++i) grads.weights[i] += gw[i];

    Tensor g_cols = matmul_transposed_a(w_mat, g_mat);  // [k, n]
    col2im_3x3(g_cols.data(), bn, cin, h, w, grads.input.data() + b0 * cin * plane);
  }

  grads.weights = grads.weights.reshaped({cout, cin, 3, 3});
  return grads;
}

Tensor maxpool_forward(const Tensor& x, PoolCache& cache) {
  require_rank4(x, "maxpool input");
  const std::size_t batch = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
  if (h < 2 || w < 2) {
    throw ShapeError("maxpool needs spatial extents >= 2, got " + shape_to_string(x.shape()));
  }
  const std::size_t oh = h / 2, ow = w / 2;
  Tensor out({batch, c, oh, ow});
  cache.input_shape = x.shape();
  cache.argmax.assign(out.size(), 0);

  const std::size_t planes = batch * c;
  parallel_for(planes, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t pl = lo; pl < hi; ++pl) {
      const double* in_plane = x.data() + pl * h * w;
      double* out_plane = out.data() + pl * oh * ow;
      std::size_t* arg_plane = cache.argmax.data() + pl * oh * ow;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const std::size_t base = (2 * oy) * w + 2 * ox;
          // Row-major window scan with strict > keeps ties on the first max.
          std::size_t best = base;
          double best_v = in_plane[base];
          const std::size_t candidates[3] = {base + 1, base + w, base + w + 1};
          for (std::size_t cand : candidates) {
            if (in_plane[cand] > best_v) {
              best_v = in_plane[cand];
              best = cand;
            }
          }
          out_plane[oy * ow + ox] = best_v;
          arg_plane[oy * ow + ox] = pl * h * w + best;
        }
      }
    }
  });
  return out;
}

Tensor maxpool_backward(const Tensor& grad_out, const PoolCache& cache) {
  if (cache.input_shape.size() != 4) {
    throw ShapeError("maxpool backward needs the cache of a prior forward pass");
  }
  if (grad_out.size() != cache.argmax.size()) {
    throw ShapeError("maxpool grad_out has " + std::to_string(grad_out.size()) +
                     " elements, cache expects " + std::to_string(cache.argmax.size()));
  }
  Tensor grad_x(cache.input_shape);
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    grad_x[cache.argmax[i]] += grad_out[i];
  }
  return grad_x;
}

Tensor relu(const Tensor& x, ReluCache* cache) {
  if (cache) cache->input = x;
  Tensor out = x;
  double* d = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (d[i] < 0.0) d[i] = 0.0;
  }
  return out;
}

Tensor relu_backward(const Tensor& grad_out, const ReluCache& cache) {
  if (!grad_out.same_shape(cache.input)) {
    throw ShapeError("relu grad_out shape " + shape_to_string(grad_out.shape()) +
                     " does not match cached input " + shape_to_string(cache.input.shape()));
  }
  Tensor grad_x = grad_out;
  for (std::size_t i = 0; i < grad_x.size(); ++i) {
    if (cache.input[i] <= 0.0) grad_x[i] = 0.0;
  }
  return grad_x;
}

Tensor dropout(const Tensor& x, double rate, Mode mode, RngStream& stream, DropoutCache& cache) {
  if (rate < 0.0 || rate >= 1.0) {
    throw RangeError("dropout rate must lie in [0,1), got " + std::to_string(rate));
  }
  cache.rate = rate;
  if (mode == Mode::Eval || rate == 0.0) {
    cache.identity = true;
    return x;
  }
  cache.identity = false;
  cache.mask = Tensor(x.shape());
  const double keep_prob = 1.0 - rate;
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool keep = stream.next_double() >= rate;
    cache.mask[i] = keep ? 1.0 : 0.0;
    out[i] = keep ? x[i] / keep_prob : 0.0;
  }
  return out;
}

Tensor dropout_backward(const Tensor& grad_out, const DropoutCache& cache) {
  if (cache.identity) {
    return grad_out;
  }
  if (!grad_out.same_shape(cache.mask)) {
    throw ShapeError("dropout grad_out shape does not match cached mask");
  }
  const double keep_prob = 1.0 - cache.rate;
  Tensor grad_x = grad_out;
  for (std::size_t i = 0; i < grad_x.size(); ++i) {
    grad_x[i] = grad_x[i] * cache.mask[i] / keep_prob;
  }
  return grad_x;
}

Tensor flatten(const Tensor& x) {
  require_rank4(x, "flatten input");
  return x.reshaped({x.extent(0), x.extent(1) * x.extent(2) * x.extent(3)});
}

Tensor unflatten(const Tensor& x, std::vector<std::size_t> shape) {
  return x.reshaped(std::move(shape));
}

Tensor dense_forward(const Tensor& x, const DenseParams& p, DenseCache& cache) {
  if (x.rank() != 2) {
    throw ShapeError("dense input must be rank-2 [B,K], got " + shape_to_string(x.shape()));
  }
  if (p.weights.rank() != 2 || p.weights.extent(1) != x.extent(1)) {
    throw ShapeError("dense weights " + shape_to_string(p.weights.shape()) +
                     " do not match input " + shape_to_string(x.shape()));
  }
  if (p.bias.rank() != 1 || p.bias.extent(0) != p.weights.extent(0)) {
    throw ShapeError("dense bias must be [out], got " + shape_to_string(p.bias.shape()));
  }
  cache.input = x;
  Tensor y = matmul_transposed_b(x, p.weights);  // [B, N]
  const std::size_t batch = y.extent(0), n = y.extent(1);
  for (std::size_t b = 0; b < batch; ++b) {
    double* row = y.data() + b * n;
    for (std::size_t j = 0; j < n; ++j) row[j] += p.bias[j];
  }
  return y;
}

DenseGrads dense_backward(const Tensor& grad_out, const DenseCache& cache, const DenseParams& p) {
  const Tensor& x = cache.input;
  if (x.rank() != 2) {
    throw ShapeError("dense backward needs the cache of a prior forward pass");
  }
  if (grad_out.rank() != 2 || grad_out.extent(0) != x.extent(0) ||
      grad_out.extent(1) != p.weights.extent(0)) {
    throw ShapeError("dense grad_out shape " + shape_to_string(grad_out.shape()) +
                     " does not match forward output");
  }
  DenseGrads grads;
  grads.input = matmul(grad_out, p.weights);           // [B, K]
  grads.weights = matmul_transposed_a(grad_out, x);    // [N, K]
  grads.bias = Tensor({p.bias.extent(0)});
  const std::size_t batch = grad_out.extent(0), n = grad_out.extent(1);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* row = grad_out.data() + b * n;
    for (std::size_t j = 0; j < n; ++j) grads.bias[j] += row[j];
  }
  return grads;
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 2) {
    throw ShapeError("softmax expects rank-2 [B,K], got " + shape_to_string(logits.shape()));
  }
  const std::size_t batch = logits.extent(0), k = logits.extent(1);
  Tensor out({batch, k});
  for (std::size_t b = 0; b < batch; ++b) {
    const double* in = logits.data() + b * k;
    double* o = out.data() + b * k;
    double mx = in[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, in[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (std::size_t j = 0; j < k; ++j) o[j] /= sum;
  }
  return out;
}

Tensor he_init(std::vector<std::size_t> shape, std::size_t fan_in, RngStream& stream) {
  if (fan_in < 1) {
    throw RangeError("he_init fan_in must be >= 1");
  }
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  return rng_normal(stream, std::move(shape), 0.0, stddev);
}

}  // namespace scriptbmi::nn
