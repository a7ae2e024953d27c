#include "scriptbmi/imaging.hpp"

#include <algorithm>
#include <cmath>

#include "scriptbmi/parallel.hpp"

namespace scriptbmi {

namespace {

std::uint8_t gray_of(const Image& img, int x, int y) {
  if (img.channels == 1) return img.at(x, y, 0);
  const int sum = img.at(x, y, 0) + img.at(x, y, 1) + img.at(x, y, 2);
  return static_cast<std::uint8_t>(sum / 3);
}

}  // namespace

int otsu_level(const std::array<std::uint64_t, 256>& histogram) {
  std::uint64_t total = 0;
  double grand_sum = 0.0;
  for (int v = 0; v < 256; ++v) {
    total += histogram[v];
    grand_sum += static_cast<double>(v) * static_cast<double>(histogram[v]);
  }
  if (total == 0) return 0;

  double best_variance = -1.0;
  int best_t = 0;
  std::uint64_t count0 = 0;
  double sum0 = 0.0;
  for (int t = 0; t < 256; ++t) {
    count0 += histogram[t];
    sum0 += static_cast<double>(t) * static_cast<double>(histogram[t]);
    const std::uint64_t count1 = total - count0;
    if (count0 == 0 || count1 == 0) continue;
    const double mean0 = sum0 / static_cast<double>(count0);
    const double mean1 = (grand_sum - sum0) / static_cast<double>(count1);
    const double variance = static_cast<double>(count0) * static_cast<double>(count1) *
                            (mean0 - mean1) * (mean0 - mean1);
    if (variance > best_variance) {
      best_variance = variance;
      best_t = t;
    }
  }
  return best_t;
}

InkMask otsu_threshold(const Image& img) {
  if (img.empty()) {
    throw RangeError("otsu_threshold needs a non-empty image");
  }
  std::array<std::uint64_t, 256> histogram{};
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      ++histogram[gray_of(img, x, y)];
    }
  }
  InkMask mask;
  mask.width = img.width;
  mask.height = img.height;
  mask.ink.assign(static_cast<std::size_t>(img.width) * img.height, 0);

  int distinct = 0;
  for (auto c : histogram) {
    if (c) ++distinct;
  }
  if (distinct < 2) {
    // No separation possible; nothing is ink.
    mask.threshold = -1;
    return mask;
  }

  mask.threshold = otsu_level(histogram);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (gray_of(img, x, y) <= mask.threshold) {
        mask.ink[static_cast<std::size_t>(y) * img.width + x] = 1;
      }
    }
  }
  return mask;
}

namespace {

struct Component {
  int min_x, min_y, max_x, max_y;
  int area = 0;
};

std::vector<Component> connected_components(const InkMask& mask, int min_area) {
  const int w = mask.width, h = mask.height;
  std::vector<int> label(static_cast<std::size_t>(w) * h, -1);
  std::vector<Component> components;
  std::vector<std::size_t> stack;

  for (int sy = 0; sy < h; ++sy) {
    for (int sx = 0; sx < w; ++sx) {
      const std::size_t start = static_cast<std::size_t>(sy) * w + sx;
      if (!mask.ink[start] || label[start] >= 0) continue;
      const int id = static_cast<int>(components.size());
      Component comp{sx, sy, sx, sy, 0};
      label[start] = id;
      stack.assign(1, start);
      while (!stack.empty()) {
        const std::size_t p = stack.back();
        stack.pop_back();
        const int x = static_cast<int>(p % w);
        const int y = static_cast<int>(p / w);
        ++comp.area;
        comp.min_x = std::min(comp.min_x, x);
        comp.max_x = std::max(comp.max_x, x);
        comp.min_y = std::min(comp.min_y, y);
        comp.max_y = std::max(comp.max_y, y);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0) continue;
            const int nx = x + dx, ny = y + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const std::size_t q = static_cast<std::size_t>(ny) * w + nx;
            if (mask.ink[q] && label[q] < 0) {
              label[q] = id;
              stack.push_back(q);
            }
          }
        }
      }
      components.push_back(comp);
    }
  }

  std::vector<Component> kept;
  for (const Component& c : components) {
    if (c.area >= min_area) kept.push_back(c);
  }
  return kept;
}

Image crop_region(const Image& sheet, int x0, int y0, int w, int h) {
  Image out = Image::create(w, h, sheet.channels);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < sheet.channels; ++c) {
        out.at(x, y, c) = sheet.at(x0 + x, y0 + y, c);
      }
    }
  }
  return out;
}

}  // namespace

SegmentResult segment_sheet(const Image& sheet, int min_area, int pad, std::string source_name) {
  if (sheet.width < 64 || sheet.height < 64) {
    throw RangeError("segment_sheet needs a sheet of at least 64x64 pixels");
  }
  if (min_area < 1 || pad < 0) {
    throw RangeError("segment_sheet needs min_area >= 1 and pad >= 0");
  }
  const InkMask mask = otsu_threshold(sheet);
  const std::vector<Component> components = connected_components(mask, min_area);

  SegmentResult result;
  if (components.empty()) {
    result.empty_warning = true;
    return result;
  }

  // Reading order: horizontal bands of the median component height, then x.
  std::vector<int> heights;
  heights.reserve(components.size());
  for (const Component& c : components) heights.push_back(c.max_y - c.min_y + 1);
  std::sort(heights.begin(), heights.end());
  const int band_h = std::max(1, heights[heights.size() / 2]);

  struct Ordered {
    int band, x, y;
    const Component* comp;
  };
  std::vector<Ordered> ordered;
  ordered.reserve(components.size());
  for (const Component& c : components) {
    const int center_y = (c.min_y + c.max_y) / 2;
    ordered.push_back({center_y / band_h, c.min_x, c.min_y, &c});
  }
  std::sort(ordered.begin(), ordered.end(), [](const Ordered& a, const Ordered& b) {
    if (a.band != b.band) return a.band < b.band;
    if (a.x != b.x) return a.x < b.x;
    return a.y < b.y;
  });

  // Crops must be at least the minimum glyph size in each dimension.
  constexpr int kMinGlyph = 8;
  const auto widen = [](int& lo, int& hi, int extent) {
    while (hi - lo + 1 < kMinGlyph) {
      if (lo > 0) --lo;
      if (hi - lo + 1 < kMinGlyph && hi < extent - 1) ++hi;
    }
  };

  int seq = 0;
  for (const Ordered& o : ordered) {
    const Component& c = *o.comp;
    int x0 = std::max(0, c.min_x - pad);
    int y0 = std::max(0, c.min_y - pad);
    int x1 = std::min(sheet.width - 1, c.max_x + pad);
    int y1 = std::min(sheet.height - 1, c.max_y + pad);
    widen(x0, x1, sheet.width);
    widen(y0, y1, sheet.height);
    CharCrop crop;
    crop.image = crop_region(sheet, x0, y0, x1 - x0 + 1, y1 - y0 + 1);
    crop.source_sheet = source_name;
    crop.x = x0;
    crop.y = y0;
    crop.w = x1 - x0 + 1;
    crop.h = y1 - y0 + 1;
    crop.sequence_index = seq++;
    result.crops.push_back(std::move(crop));
  }
  return result;
}

Image median_denoise(const Image& img) {
  if (img.empty()) return img;
  Image out = img;
  parallel_for(static_cast<std::size_t>(img.height), [&](std::size_t ylo, std::size_t yhi) {
    std::uint8_t window[9];
    for (std::size_t yy = ylo; yy < yhi; ++yy) {
      const int y = static_cast<int>(yy);
      for (int x = 0; x < img.width; ++x) {
        for (int c = 0; c < img.channels; ++c) {
          int n = 0;
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              const int sx = std::clamp(x + dx, 0, img.width - 1);
              const int sy = std::clamp(y + dy, 0, img.height - 1);
              window[n++] = img.at(sx, sy, c);
            }
          }
          std::sort(window, window + 9);
          out.at(x, y, c) = window[4];
        }
      }
    }
  });
  return out;
}

Image resize_bilinear(const Image& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) {
    throw RangeError("resize target must be at least 1x1");
  }
  if (img.empty()) {
    throw RangeError("resize_bilinear needs a non-empty image");
  }
  if (out_h == img.height && out_w == img.width) {
    return img;
  }
  Image out = Image::create(out_w, out_h, img.channels);
  const double scale_x = static_cast<double>(img.width) / out_w;
  const double scale_y = static_cast<double>(img.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    const double sy = std::clamp((y + 0.5) * scale_y - 0.5, 0.0, img.height - 1.0);
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double fy = sy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double sx = std::clamp((x + 0.5) * scale_x - 0.5, 0.0, img.width - 1.0);
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double fx = sx - x0;
      for (int c = 0; c < img.channels; ++c) {
        const double top = img.at(x0, y0, c) * (1.0 - fx) + img.at(x1, y0, c) * fx;
        const double bottom = img.at(x0, y1, c) * (1.0 - fx) + img.at(x1, y1, c) * fx;
        const double value = top * (1.0 - fy) + bottom * fy;
        out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp<long>(std::lround(value), 0, 255));
      }
    }
  }
  return out;
}

Tensor normalize(const Image& img) {
  if (img.empty()) {
    throw RangeError("normalize needs a non-empty image");
  }
  Tensor t({static_cast<std::size_t>(img.channels), static_cast<std::size_t>(img.height),
            static_cast<std::size_t>(img.width)});
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        t(static_cast<std::size_t>(c), static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
            img.at(x, y, c) / 255.0;
      }
    }
  }
  return t;
}

Image to_image(const Tensor& t) {
  if (t.rank() != 3 || (t.extent(0) != 1 && t.extent(0) != 3)) {
    throw ShapeError("to_image expects [C,H,W] with 1 or 3 channels, got " +
                     shape_to_string(t.shape()));
  }
  const int c_count = static_cast<int>(t.extent(0));
  const int h = static_cast<int>(t.extent(1));
  const int w = static_cast<int>(t.extent(2));
  Image img = Image::create(w, h, c_count);
  for (int c = 0; c < c_count; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double v = t(static_cast<std::size_t>(c), static_cast<std::size_t>(y),
                           static_cast<std::size_t>(x));
        img.at(x, y, c) = static_cast<std::uint8_t>(std::clamp<long>(std::lround(v * 255.0), 0, 255));
      }
    }
  }
  return img;
}

}  // namespace scriptbmi
