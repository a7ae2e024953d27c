#include "scriptbmi/augment.hpp"

#include <cmath>
#include <vector>

namespace scriptbmi {

namespace {

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

void require_chw(const Tensor& img) {
  if (img.rank() != 3) {
    throw ShapeError("augmentations expect [C,H,W] images, got " + shape_to_string(img.shape()));
  }
}

}  // namespace

void AugmentSpec::validate() const {
  if (brightness_factor <= 0.0 || contrast_factor <= 0.0) {
    throw RangeError("brightness/contrast factors must be positive");
  }
  if (sharpness_amount < 0.0 || noise_sigma < 0.0 || blur_sigma < 0.0) {
    throw RangeError("sharpness amount and sigmas must be non-negative");
  }
  if (blur_ksize < 1 || blur_ksize % 2 == 0) {
    throw RangeError("blur kernel size must be odd and positive");
  }
  if (jitter_scale_lo > jitter_scale_hi || jitter_shift_lo > jitter_shift_hi) {
    throw RangeError("jitter ranges must be ordered");
  }
}

Tensor brightness(const Tensor& img, double factor) {
  require_chw(img);
  if (factor <= 0.0) {
    throw RangeError("brightness factor must be positive");
  }
  if (factor == 1.0) return img;
  Tensor out = img;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = clamp01(out[i] * factor);
  }
  return out;
}

Tensor contrast(const Tensor& img, double factor) {
  require_chw(img);
  if (factor <= 0.0) {
    throw RangeError("contrast factor must be positive");
  }
  if (factor == 1.0) return img;
  double mean = 0.0;
  for (std::size_t i = 0; i < img.size(); ++i) mean += img[i];
  mean /= static_cast<double>(img.size());
  Tensor out = img;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = clamp01(mean + factor * (out[i] - mean));
  }
  return out;
}

Tensor sharpen(const Tensor& img, double amount) {
  require_chw(img);
  if (amount < 0.0) {
    throw RangeError("sharpen amount must be non-negative");
  }
  if (amount == 0.0) return img;
  const Tensor blurred = gaussian_blur(img, 1.0, 5);
  Tensor out = img;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = clamp01(img[i] + amount * (img[i] - blurred[i]));
  }
  return out;
}

Tensor gaussian_noise(const Tensor& img, double sigma, RngStream& stream) {
  require_chw(img);
  if (sigma < 0.0) {
    throw RangeError("noise sigma must be non-negative");
  }
  if (sigma == 0.0) return img;
  Tensor out = img;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = clamp01(out[i] + stream.next_normal(0.0, sigma));
  }
  return out;
}

Tensor gaussian_blur(const Tensor& img, double sigma, int ksize) {
  require_chw(img);
  if (sigma < 0.0) {
    throw RangeError("blur sigma must be non-negative");
  }
  if (ksize < 1 || ksize % 2 == 0) {
    throw RangeError("blur kernel size must be odd and positive");
  }
  if (sigma == 0.0) return img;

  const int radius = ksize / 2;
  std::vector<double> kernel(static_cast<std::size_t>(ksize));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = w;
    sum += w;
  }
  for (double& w : kernel) w /= sum;

  const std::size_t channels = img.extent(0), h = img.extent(1), w = img.extent(2);
  const auto tap = [](std::size_t extent, long i) {
    return static_cast<std::size_t>(std::clamp<long>(i, 0, static_cast<long>(extent) - 1));
  };

  Tensor horizontal(img.shape());
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      const double* row = img.data() + (c * h + y) * w;
      double* out_row = horizontal.data() + (c * h + y) * w;
      for (std::size_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          acc += kernel[static_cast<std::size_t>(k + radius)] * row[tap(w, static_cast<long>(x) + k)];
        }
        out_row[x] = acc;
      }
    }
  }
  Tensor out(img.shape());
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      double* out_row = out.data() + (c * h + y) * w;
      for (std::size_t x = 0; x < w; ++x) {
        double acc = 0.0;
        const double* plane = horizontal.data() + c * h * w;
        for (int k = -radius; k <= radius; ++k) {
          acc += kernel[static_cast<std::size_t>(k + radius)] *
                 plane[tap(h, static_cast<long>(y) + k) * w + x];
        }
        out_row[x] = clamp01(acc);
      }
    }
  }
  return out;
}

Tensor color_jitter(const Tensor& img, const AugmentSpec& spec, RngStream& stream) {
  require_chw(img);
  if (img.extent(0) != 3) {
    throw ShapeError("color_jitter needs a 3-channel image, got " +
                     std::to_string(img.extent(0)) + " channels");
  }
  const std::size_t plane = img.extent(1) * img.extent(2);
  Tensor out = img;
  for (std::size_t c = 0; c < 3; ++c) {
    const double scale = spec.jitter_scale_lo == spec.jitter_scale_hi
                             ? spec.jitter_scale_lo
                             : stream.next_uniform(spec.jitter_scale_lo, spec.jitter_scale_hi);
    const double shift = spec.jitter_shift_lo == spec.jitter_shift_hi
                             ? spec.jitter_shift_lo
                             : stream.next_uniform(spec.jitter_shift_lo, spec.jitter_shift_hi);
    double* p = out.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      p[i] = clamp01(scale * p[i] + shift);
    }
  }
  return out;
}

std::array<Tensor, 7> augment_all(const Tensor& img, const AugmentSpec& spec,
                                  const RngStream& per_image_stream) {
  require_chw(img);
  spec.validate();
  RngStream noise_stream = per_image_stream.derive("noise");
  RngStream jitter_stream = per_image_stream.derive("jitter");
  return {
      img,
      gaussian_blur(img, spec.blur_sigma, spec.blur_ksize),
      gaussian_noise(img, spec.noise_sigma, noise_stream),
      color_jitter(img, spec, jitter_stream),
      brightness(img, spec.brightness_factor),
      contrast(img, spec.contrast_factor),
      sharpen(img, spec.sharpness_amount),
  };
}

}  // namespace scriptbmi
