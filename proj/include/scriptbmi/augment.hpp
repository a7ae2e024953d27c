#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "scriptbmi/rng.hpp"
#include "scriptbmi/tensor.hpp"

namespace scriptbmi {

// Transform magnitudes; every field is config-overridable.
struct AugmentSpec {
  double brightness_factor = 1.25;
  double contrast_factor = 1.25;
  double sharpness_amount = 1.0;
  double noise_sigma = 0.05;    // on the [0,1] scale
  double blur_sigma = 1.0;
  int blur_ksize = 5;
  double jitter_scale_lo = 0.9;
  double jitter_scale_hi = 1.1;
  double jitter_shift_lo = -0.05;
  double jitter_shift_hi = 0.05;
  std::uint64_t master_seed = 42;

  void validate() const;
};

// All transforms take a normalized [0,1] image as [C,H,W] and clamp the
// result back to [0,1].

Tensor brightness(const Tensor& img, double factor);

// out = mean + factor * (in - mean), mean over the whole image.
Tensor contrast(const Tensor& img, double factor);

// Unsharp mask: in + amount * (in - gaussian_blur(in, sigma=1)).
Tensor sharpen(const Tensor& img, double amount);

Tensor gaussian_noise(const Tensor& img, double sigma, RngStream& stream);

// Separable convolution with a normalized discrete Gaussian; replicated
// borders. Sigma 0 is the identity.
Tensor gaussian_blur(const Tensor& img, double sigma, int ksize = 5);

// Per-channel affine color jitter with scale/shift drawn from the spec
// ranges; 3-channel images only.
Tensor color_jitter(const Tensor& img, const AugmentSpec& spec, RngStream& stream);

// Original plus the six variants, in presentation order. Noise and jitter
// use sub-streams derived from `per_image_stream`, so results do not depend
// on processing order.
std::array<Tensor, 7> augment_all(const Tensor& img, const AugmentSpec& spec,
                                  const RngStream& per_image_stream);

// File suffixes matching the augment_all output order.
inline constexpr std::array<std::string_view, 7> kAugmentSuffixes = {
    "", "_blur", "_noise", "_jitter", "_bright", "_contrast", "_sharp"};

}  // namespace scriptbmi
