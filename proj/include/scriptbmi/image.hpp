#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "scriptbmi/errors.hpp"

namespace scriptbmi {

// 8-bit raster, row-major, channel-interleaved; 1 or 3 channels.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  static Image create(int width, int height, int channels, std::uint8_t fill = 0);

  std::uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool empty() const { return pixels.empty(); }
};

// Reads binary portable pixmaps (P6) and graymaps (P5). Grayscale files are
// promoted to 3 channels by replication unless promote_gray is false.
Image load_image(const std::filesystem::path& file, bool promote_gray = true);

// P5 for 1-channel images, P6 for 3-channel.
void save_image(const Image& img, const std::filesystem::path& file);

}  // namespace scriptbmi
