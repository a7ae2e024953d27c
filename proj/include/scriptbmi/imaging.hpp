#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "scriptbmi/image.hpp"
#include "scriptbmi/tensor.hpp"

namespace scriptbmi {

struct InkMask {
  int width = 0;
  int height = 0;
  int threshold = 0;           // gray <= threshold is ink
  std::vector<std::uint8_t> ink;  // 1 = ink, 0 = paper

  bool is_ink(int x, int y) const { return ink[static_cast<std::size_t>(y) * width + x] != 0; }
};

// Threshold maximizing between-class variance on the grayscale histogram;
// smallest maximizer on ties. Single-valued images yield an empty mask.
InkMask otsu_threshold(const Image& img);
int otsu_level(const std::array<std::uint64_t, 256>& histogram);

struct CharCrop {
  Image image;
  std::string source_sheet;
  int x = 0, y = 0, w = 0, h = 0;  // bounding box in sheet pixels
  int sequence_index = 0;
};

struct SegmentResult {
  std::vector<CharCrop> crops;
  bool empty_warning = false;  // no ink components survived
};

// Ink mask -> 8-connected components -> min-area filter -> padded boxes,
// clipped to the sheet, ordered row-major in bands of the median component
// height.
SegmentResult segment_sheet(const Image& sheet, int min_area = 30, int pad = 4,
                            std::string source_name = "");

// Per-channel 3x3 median; edge pixels use a coordinate-clamped window.
Image median_denoise(const Image& img);

// Half-pixel-center bilinear resampling, rounded to nearest 8-bit value.
Image resize_bilinear(const Image& img, int out_h, int out_w);

// pixel/255 into [0,1], channel-planar [C,H,W].
Tensor normalize(const Image& img);

// Inverse of normalize up to 8-bit quantization.
Image to_image(const Tensor& t);

}  // namespace scriptbmi
