#include <doctest.h>

#include <cmath>
#include <fstream>

#include "scriptbmi/imaging.hpp"
#include "scriptbmi/rng.hpp"
#include "test_support.hpp"

using namespace scriptbmi;

namespace {

// Brute-force Otsu oracle: scan all 256 thresholds, maximize the normalized
// between-class variance, first maximizer wins.
int otsu_brute_force(const std::array<std::uint64_t, 256>& hist) {
  std::uint64_t total = 0;
  for (auto c : hist) total += c;
  double best = -1.0;
  int best_t = 0;
  for (int t = 0; t < 256; ++t) {
    std::uint64_t n0 = 0, n1 = 0;
    double s0 = 0.0, s1 = 0.0;
    for (int v = 0; v < 256; ++v) {
      if (v <= t) {
        n0 += hist[v];
        s0 += static_cast<double>(v) * static_cast<double>(hist[v]);
      } else {
        n1 += hist[v];
        s1 += static_cast<double>(v) * static_cast<double>(hist[v]);
      }
    }
    if (n0 == 0 || n1 == 0) continue;
    const double w0 = static_cast<double>(n0) / static_cast<double>(total);
    const double w1 = static_cast<double>(n1) / static_cast<double>(total);
    const double mu0 = s0 / static_cast<double>(n0);
    const double mu1 = s1 / static_cast<double>(n1);
    const double variance = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    if (variance > best + 1e-12) {
      best = variance;
      best_t = t;
    }
  }
  return best_t;
}

Image two_level_image(std::uint8_t dark, std::uint8_t light) {
  Image img = Image::create(16, 16, 1, light);
  for (int y = 4; y < 8; ++y) {
    for (int x = 4; x < 12; ++x) img.at(x, y, 0) = dark;
  }
  return img;
}

}  // namespace

TEST_CASE("ppm round trip is lossless and grayscale promotes to 3 channels") {
  testsup::TempDir tmp("ppm");
  RngStream rng(1, "ppm");
  Image img = Image::create(7, 5, 3);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.next_u64() % 256);
  const auto file = tmp.path / "img.ppm";
  save_image(img, file);
  const Image back = load_image(file);
  CHECK(back.width == img.width);
  CHECK(back.height == img.height);
  CHECK(back.pixels == img.pixels);

  Image gray = Image::create(2, 2, 1, 255);
  const auto gray_file = tmp.path / "gray.pgm";
  save_image(gray, gray_file);
  const Image promoted = load_image(gray_file);
  CHECK(promoted.channels == 3);
  for (auto p : promoted.pixels) CHECK(p == 255);
  const Image kept = load_image(gray_file, false);
  CHECK(kept.channels == 1);
}

TEST_CASE("image loader fails closed") {
  testsup::TempDir tmp("badppm");
  CHECK_THROWS_AS(load_image(tmp.path / "missing.ppm"), IoError);

  const auto truncated = tmp.path / "trunc.ppm";
  std::ofstream(truncated, std::ios::binary) << "P6\n4 4\n255\nab";
  CHECK_THROWS_AS(load_image(truncated), FormatError);

  const auto not_ppm = tmp.path / "not.ppm";
  std::ofstream(not_ppm, std::ios::binary) << "hello world";
  CHECK_THROWS_AS(load_image(not_ppm), FormatError);
}

TEST_CASE("otsu separates a bimodal image exactly like the brute-force oracle") {
  const Image img = two_level_image(10, 240);
  std::array<std::uint64_t, 256> hist{};
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) ++hist[img.at(x, y, 0)];
  }
  const int oracle = otsu_brute_force(hist);
  CHECK(otsu_level(hist) == oracle);

  const InkMask mask = otsu_threshold(img);
  CHECK(mask.threshold == oracle);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      CHECK(mask.is_ink(x, y) == (img.at(x, y, 0) == 10));
    }
  }
}

TEST_CASE("otsu on every two-level pair with gap >= 2 separates the levels") {
  // Exhaustive on histograms (the image-level path is covered above).
  int violations = 0;
  for (int dark = 0; dark <= 253; ++dark) {
    for (int light = dark + 2; light <= 255; ++light) {
      std::array<std::uint64_t, 256> hist{};
      hist[static_cast<std::size_t>(dark)] = 48;
      hist[static_cast<std::size_t>(light)] = 208;
      const int level = otsu_level(hist);
      if (!(dark <= level && level < light)) ++violations;
    }
  }
  CHECK(violations == 0);
  // Spot-check the full image path on a coarse grid.
  for (int dark = 0; dark < 250; dark += 23) {
    for (int light = dark + 2; light < 256; light += 31) {
      const Image img = two_level_image(static_cast<std::uint8_t>(dark),
                                        static_cast<std::uint8_t>(light));
      const InkMask mask = otsu_threshold(img);
      for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
          CHECK(mask.is_ink(x, y) == (img.at(x, y, 0) == dark));
        }
      }
    }
  }
}

TEST_CASE("otsu constant image yields an empty mask; inversion swaps roles") {
  const Image constant = Image::create(8, 8, 1, 77);
  const InkMask mask = otsu_threshold(constant);
  for (int i = 0; i < 64; ++i) CHECK(mask.ink[i] == 0);

  Image img = two_level_image(10, 240);
  Image inverted = img;
  for (auto& p : inverted.pixels) p = static_cast<std::uint8_t>(255 - p);
  const InkMask m = otsu_threshold(img);
  const InkMask mi = otsu_threshold(inverted);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      CHECK(m.is_ink(x, y) == !mi.is_ink(x, y));
    }
  }
}

TEST_CASE("segment_sheet finds disjoint squares in reading order") {
  Image sheet = Image::create(128, 96, 3, 255);
  // Three 12x12 dark squares: two in the top band, one lower-left.
  const auto draw_square = [&](int x0, int y0) {
    for (int y = y0; y < y0 + 12; ++y) {
      for (int x = x0; x < x0 + 12; ++x) {
        for (int c = 0; c < 3; ++c) sheet.at(x, y, c) = 20;
      }
    }
  };
  draw_square(70, 10);
  draw_square(15, 12);
  draw_square(30, 60);

  const SegmentResult result = segment_sheet(sheet, 30, 2, "fixture");
  REQUIRE(result.crops.size() == 3);
  CHECK(!result.empty_warning);

  // Reading order: top band left-to-right, then the lower square.
  CHECK(result.crops[0].x == 13);  // 15 - pad
  CHECK(result.crops[0].y == 10);
  CHECK(result.crops[1].x == 68);
  CHECK(result.crops[2].y == 58);
  for (int i = 0; i < 3; ++i) {
    CHECK(result.crops[i].sequence_index == i);
    CHECK(result.crops[i].w == 16);  // 12 + 2*pad
    CHECK(result.crops[i].h == 16);
    CHECK(result.crops[i].source_sheet == "fixture");
  }
}

TEST_CASE("segment_sheet widens thin crops to the minimum glyph size") {
  Image sheet = Image::create(64, 64, 1, 255);
  // A 3x14 vertical stroke, area 42, well above min_area.
  for (int y = 20; y < 34; ++y) {
    for (int x = 30; x < 33; ++x) sheet.at(x, y, 0) = 0;
  }
  const SegmentResult result = segment_sheet(sheet, 30, 0);
  REQUIRE(result.crops.size() == 1);
  CHECK(result.crops[0].w >= 8);
  CHECK(result.crops[0].h >= 8);
  CHECK(result.crops[0].x + result.crops[0].w <= 64);
  CHECK(result.crops[0].y + result.crops[0].h <= 64);
}

TEST_CASE("segment_sheet ignores specks below min_area and warns when blank") {
  Image sheet = Image::create(64, 64, 1, 255);
  sheet.at(10, 10, 0) = 0;  // single dark pixel: dust
  const SegmentResult dusty = segment_sheet(sheet, 30, 2);
  CHECK(dusty.crops.empty());
  CHECK(dusty.empty_warning);

  const Image blank = Image::create(64, 64, 1, 255);
  const SegmentResult none = segment_sheet(blank, 30, 2);
  CHECK(none.crops.empty());
  CHECK(none.empty_warning);

  CHECK_THROWS_AS(segment_sheet(Image::create(32, 32, 1, 255), 30, 2), RangeError);
}

TEST_CASE("median filter removes salt noise and is idempotent there") {
  Image img = Image::create(9, 9, 1, 0);
  img.at(4, 4, 0) = 255;
  const Image once = median_denoise(img);
  for (int y = 0; y < 9; ++y) {
    for (int x = 0; x < 9; ++x) CHECK(once.at(x, y, 0) == 0);
  }
  const Image twice = median_denoise(once);
  CHECK(twice.pixels == once.pixels);

  const Image constant = Image::create(5, 7, 3, 123);
  CHECK(median_denoise(constant).pixels == constant.pixels);
}

TEST_CASE("median filter never invents values outside the local window") {
  RngStream rng(5, "median");
  Image img = Image::create(12, 10, 1);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.next_u64() % 256);
  const Image out = median_denoise(img);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      bool found = false;
      for (int dy = -1; dy <= 1 && !found; ++dy) {
        for (int dx = -1; dx <= 1 && !found; ++dx) {
          const int sx = std::clamp(x + dx, 0, img.width - 1);
          const int sy = std::clamp(y + dy, 0, img.height - 1);
          if (img.at(sx, sy, 0) == out.at(x, y, 0)) found = true;
        }
      }
      CHECK(found);
    }
  }
}

TEST_CASE("bilinear resize identities") {
  RngStream rng(6, "resize");
  Image img = Image::create(5, 4, 3);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.next_u64() % 256);
  const Image same = resize_bilinear(img, 4, 5);
  CHECK(same.pixels == img.pixels);

  const Image constant = Image::create(6, 6, 1, 99);
  const Image scaled = resize_bilinear(constant, 13, 3);
  for (auto p : scaled.pixels) CHECK(p == 99);
}

TEST_CASE("bilinear resize interpolates at half-pixel centers") {
  Image img = Image::create(2, 2, 1);
  img.at(0, 0, 0) = 0;
  img.at(1, 0, 0) = 255;
  img.at(0, 1, 0) = 0;
  img.at(1, 1, 0) = 255;
  const Image wide = resize_bilinear(img, 2, 4);
  for (int y = 0; y < 2; ++y) {
    CHECK(wide.at(0, y, 0) == 0);
    CHECK(wide.at(1, y, 0) == 64);   // src x 0.25
    CHECK(wide.at(2, y, 0) == 191);  // src x 0.75
    CHECK(wide.at(3, y, 0) == 255);
    for (int x = 1; x < 4; ++x) CHECK(wide.at(x, y, 0) >= wide.at(x - 1, y, 0));
  }
}

TEST_CASE("normalize maps endpoints and layout") {
  Image img = Image::create(4, 3, 3);
  img.at(0, 0, 0) = 255;
  img.at(1, 0, 1) = 128;
  const Tensor t = normalize(img);
  CHECK(t.shape() == std::vector<std::size_t>{3, 3, 4});
  CHECK(t(std::size_t{0}, std::size_t{0}, std::size_t{0}) == 1.0);
  CHECK(t(std::size_t{1}, std::size_t{0}, std::size_t{1}) ==
        doctest::Approx(128.0 / 255.0).epsilon(1e-12));
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(t[i] >= 0.0);
    CHECK(t[i] <= 1.0);
  }

  const Image back = to_image(t);
  CHECK(back.pixels == img.pixels);
}

TEST_CASE("a crop resized to the default geometry normalizes to (3,224,224)") {
  const Image crop = Image::create(17, 23, 3, 180);
  const Tensor t = normalize(resize_bilinear(crop, 224, 224));
  CHECK(t.shape() == std::vector<std::size_t>{3, 224, 224});
}
