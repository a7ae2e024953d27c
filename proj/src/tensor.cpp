#include "scriptbmi/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "scriptbmi/parallel.hpp"

namespace scriptbmi {

namespace {

std::size_t checked_element_count(const std::vector<std::size_t>& shape) {
  if (shape.empty()) {
    throw ShapeError("tensor shape must have at least one extent");
  }
  std::size_t n = 1;
  for (std::size_t e : shape) {
    if (e == 0) {
      throw ShapeError("tensor extent must be positive, got shape " +
                       shape_to_string(shape));
    }
    n *= e;
  }
  return n;
}

}  // namespace

std::string shape_to_string(std::span<const std::size_t> shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
  data_.assign(checked_element_count(shape_), fill);
}

std::size_t Tensor::flat_index(std::span<const std::size_t> idx) const {
  if (idx.size() != shape_.size()) {
    throw ShapeError("index rank " + std::to_string(idx.size()) +
                     " does not match tensor rank " + std::to_string(shape_.size()));
  }
  std::size_t flat = 0;
  for (std::size_t d = 0; d < idx.size(); ++d) {
    flat = flat * shape_[d] + idx[d];
  }
  return flat;
}

Tensor Tensor::reshaped(std::vector<std::size_t> new_shape) const {
  const std::size_t n = checked_element_count(new_shape);
  if (n != size()) {
    throw ShapeError("cannot reshape " + shape_to_string(shape_) + " (" +
                     std::to_string(size()) + " elements) to " +
                     shape_to_string(new_shape));
  }
  Tensor out;
  out.shape_ = std::move(new_shape);
  out.data_ = data_;
  return out;
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

namespace {

// c[M,N] += a[M,K] x b[K,N]. Four output rows share each streamed B row,
// and the contiguous j loop vectorizes; the per-element accumulation order
// (k ascending) is identical for every row partition.
void matmul_block(const double* a, const double* b, double* c, std::size_t row_begin,
                  std::size_t row_end, std::size_t k_count, std::size_t n_count) {
  std::size_t i = row_begin;
  for (; i + 4 <= row_end; i += 4) {
    const double* a0 = a + i * k_count;
    const double* a1 = a0 + k_count;
    const double* a2 = a1 + k_count;
    const double* a3 = a2 + k_count;
    double* c0 = c + i * n_count;
    double* c1 = c0 + n_count;
    double* c2 = c1 + n_count;
    double* c3 = c2 + n_count;
    for (std::size_t k = 0; k < k_count; ++k) {
      const double w0 = a0[k], w1 = a1[k], w2 = a2[k], w3 = a3[k];
      if (w0 == 0.0 && w1 == 0.0 && w2 == 0.0 && w3 == 0.0) continue;
      const double* bk = b + k * n_count;
      for (std::size_t j = 0; j < n_count; ++j) {
        const double bv = bk[j];
        c0[j] += w0 * bv;
        c1[j] += w1 * bv;
        c2[j] += w2 * bv;
        c3[j] += w3 * bv;
      }
    }
  }
  for (; i < row_end; ++i) {
    double* ci = c + i * n_count;
    const double* ai = a + i * k_count;
    for (std::size_t k = 0; k < k_count; ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      const double* bk = b + k * n_count;
      for (std::size_t j = 0; j < n_count; ++j) {
        ci[j] += aik * bk[j];
      }
    }
  }
}

void require_rank2(const Tensor& t, const char* name) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(name) + " must be rank-2, got shape " +
                     shape_to_string(t.shape()));
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul lhs");
  require_rank2(b, "matmul rhs");
  const std::size_t m = a.extent(0), k = a.extent(1);
  if (b.extent(0) != k) {
    throw ShapeError("matmul inner extents differ: " + shape_to_string(a.shape()) +
                     " x " + shape_to_string(b.shape()));
  }
  const std::size_t n = b.extent(1);
  Tensor c({m, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  parallel_for(m, [&](std::size_t lo, std::size_t hi) {
    matmul_block(pa, pb, pc, lo, hi, k, n);
  });
  return c;
}

Tensor matmul_transposed_b(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul lhs");
  require_rank2(b, "matmul rhs");
  const std::size_t m = a.extent(0), n = a.extent(1);
  if (b.extent(1) != n) {
    throw ShapeError("matmul_transposed_b trailing extents differ: " +
                     shape_to_string(a.shape()) + " x " + shape_to_string(b.shape()));
  }
  const std::size_t k = b.extent(0);
  Tensor c({m, k});
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  // Four-lane dot product; the lane split and ((l0+l1)+(l2+l3)) reduction fix
  // the summation order independently of blocking or thread partition.
  const auto dot4 = [n](const double* x, const double* y) {
    double lane[4] = {0.0, 0.0, 0.0, 0.0};
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      lane[0] += x[j] * y[j];
      lane[1] += x[j + 1] * y[j + 1];
      lane[2] += x[j + 2] * y[j + 2];
      lane[3] += x[j + 3] * y[j + 3];
    }
    double acc = (lane[0] + lane[1]) + (lane[2] + lane[3]);
    for (; j < n; ++j) acc += x[j] * y[j];
    return acc;
  };
  // Each streamed B row feeds four output rows; per row the lane arithmetic
  // is exactly dot4's.
  parallel_for(m, [&](std::size_t lo, std::size_t hi) {
    std::size_t i = lo;
    for (; i + 4 <= hi; i += 4) {
      const double* a0 = pa + i * n;
      const double* a1 = a0 + n;
      const double* a2 = a1 + n;
      const double* a3 = a2 + n;
      for (std::size_t r = 0; r < k; ++r) {
        const double* br = pb + r * n;
        double l0[4] = {0, 0, 0, 0}, l1[4] = {0, 0, 0, 0};
        double l2[4] = {0, 0, 0, 0}, l3[4] = {0, 0, 0, 0};
        std::size_t j = 0;
        for (; j + 4 <= n; j += 4) {
          for (std::size_t q = 0; q < 4; ++q) {
            const double bv = br[j + q];
            l0[q] += a0[j + q] * bv;
            l1[q] += a1[j + q] * bv;
            l2[q] += a2[j + q] * bv;
            l3[q] += a3[j + q] * bv;
          }
        }
        double s0 = (l0[0] + l0[1]) + (l0[2] + l0[3]);
        double s1 = (l1[0] + l1[1]) + (l1[2] + l1[3]);
        double s2 = (l2[0] + l2[1]) + (l2[2] + l2[3]);
        double s3 = (l3[0] + l3[1]) + (l3[2] + l3[3]);
        for (; j < n; ++j) {
          const double bv = br[j];
          s0 += a0[j] * bv;
          s1 += a1[j] * bv;
          s2 += a2[j] * bv;
          s3 += a3[j] * bv;
        }
        pc[i * k + r] = s0;
        pc[(i + 1) * k + r] = s1;
        pc[(i + 2) * k + r] = s2;
        pc[(i + 3) * k + r] = s3;
      }
    }
    for (; i < hi; ++i) {
      const double* ai = pa + i * n;
      double* ci = pc + i * k;
      for (std::size_t r = 0; r < k; ++r) {
        ci[r] = dot4(ai, pb + r * n);
      }
    }
  });
  return c;
}

Tensor matmul_transposed_a(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul lhs");
  require_rank2(b, "matmul rhs");
  const std::size_t m = a.extent(0), k = a.extent(1);
  if (b.extent(0) != m) {
    throw ShapeError("matmul_transposed_a leading extents differ: " +
                     shape_to_string(a.shape()) + " x " + shape_to_string(b.shape()));
  }
  const std::size_t n = b.extent(1);
  Tensor c({k, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  // Workers own disjoint output rows (columns of a); m ascends inside, so the
  // accumulation order per element is fixed. Keeping four output rows
  // resident while streaming all of B bounds the write traffic.
  parallel_for(k, [&](std::size_t lo, std::size_t hi) {
    std::size_t r = lo;
    for (; r + 4 <= hi; r += 4) {
      double* c0 = pc + r * n;
      double* c1 = c0 + n;
      double* c2 = c1 + n;
      double* c3 = c2 + n;
      for (std::size_t i = 0; i < m; ++i) {
        const double* ai = pa + i * k;
        const double w0 = ai[r], w1 = ai[r + 1], w2 = ai[r + 2], w3 = ai[r + 3];
        if (w0 == 0.0 && w1 == 0.0 && w2 == 0.0 && w3 == 0.0) continue;
        const double* bi = pb + i * n;
        for (std::size_t j = 0; j < n; ++j) {
          const double bv = bi[j];
          c0[j] += w0 * bv;
          c1[j] += w1 * bv;
          c2[j] += w2 * bv;
          c3[j] += w3 * bv;
        }
      }
    }
    for (; r < hi; ++r) {
      double* cr = pc + r * n;
      for (std::size_t i = 0; i < m; ++i) {
        const double air = pa[i * k + r];
        if (air == 0.0) continue;
        const double* bi = pb + i * n;
        for (std::size_t j = 0; j < n; ++j) {
          cr[j] += air * bi[j];
        }
      }
    }
  });
  return c;
}

}  // namespace scriptbmi
