#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <string>

#include "scriptbmi/rng.hpp"
#include "scriptbmi/tensor.hpp"

namespace testsup {

// Unique scratch directory, removed on scope exit.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& label) {
    static std::atomic<unsigned> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("scriptbmi_" + label + "_" + std::to_string(counter++) + "_" +
            std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline double rel_gap(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Central finite differences over every element of `param` against the
// analytic gradient; returns the worst relative gap.
template <typename LossFn>
double max_grad_gap(scriptbmi::Tensor& param, const scriptbmi::Tensor& analytic, LossFn&& loss,
                    double h = 1e-5) {
  double worst = 0.0;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double saved = param[i];
    param[i] = saved + h;
    const double up = loss();
    param[i] = saved - h;
    const double down = loss();
    param[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    worst = std::max(worst, rel_gap(analytic[i], numeric));
  }
  return worst;
}

inline scriptbmi::Tensor random_tensor(std::vector<std::size_t> shape, scriptbmi::RngStream& rng,
                                       double lo = -1.0, double hi = 1.0) {
  return scriptbmi::rng_uniform(rng, std::move(shape), lo, hi);
}

// Dot "probe" so Jacobian-transpose action reduces to one scalar loss.
inline double probe_dot(const scriptbmi::Tensor& a, const scriptbmi::Tensor& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace testsup
