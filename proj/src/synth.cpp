#include "scriptbmi/synth.hpp"

#include <algorithm>
#include <cmath>

#include "scriptbmi/image.hpp"

namespace scriptbmi {

namespace fs = std::filesystem;

namespace {

struct Segment {
  double x1, y1, x2, y2;  // glyph-local coordinates in [0,1], y down
};

// Crude vector strokes for a-z; legibility is secondary to determinism and
// per-glyph distinctness.
const std::vector<Segment>& glyph_segments(int char_index) {
  static const std::vector<std::vector<Segment>> table = {
      /*a*/ {{.7, .3, .3, .3}, {.3, .3, .3, .9}, {.3, .9, .7, .9}, {.7, .2, .7, .9}},
      /*b*/ {{.3, .0, .3, .9}, {.3, .4, .7, .4}, {.7, .4, .7, .9}, {.3, .9, .7, .9}},
      /*c*/ {{.7, .3, .3, .3}, {.3, .3, .3, .9}, {.3, .9, .7, .9}},
      /*d*/ {{.7, .0, .7, .9}, {.7, .4, .3, .4}, {.3, .4, .3, .9}, {.3, .9, .7, .9}},
      /*e*/ {{.3, .6, .7, .6}, {.7, .6, .7, .3}, {.7, .3, .3, .3}, {.3, .3, .3, .9}, {.3, .9, .7, .9}},
      /*f*/ {{.7, .1, .4, .1}, {.4, .1, .4, .9}, {.2, .45, .6, .45}},
      /*g*/ {{.7, .3, .3, .3}, {.3, .3, .3, .8}, {.3, .8, .7, .8}, {.7, .3, .7, 1.0}, {.7, 1.0, .3, 1.0}},
      /*h*/ {{.3, .0, .3, .9}, {.3, .45, .7, .45}, {.7, .45, .7, .9}},
      /*i*/ {{.5, .15, .5, .25}, {.5, .4, .5, .9}},
      /*j*/ {{.6, .15, .6, .25}, {.6, .4, .6, 1.0}, {.6, 1.0, .3, 1.0}},
      /*k*/ {{.3, .0, .3, .9}, {.7, .35, .3, .6}, {.4, .55, .7, .9}},
      /*l*/ {{.5, .0, .5, .85}, {.5, .85, .65, .9}},
      /*m*/ {{.2, .9, .2, .35}, {.2, .35, .5, .5}, {.5, .5, .5, .9}, {.5, .5, .8, .35}, {.8, .35, .8, .9}},
      /*n*/ {{.3, .9, .3, .35}, {.3, .45, .7, .35}, {.7, .35, .7, .9}},
      /*o*/ {{.3, .35, .7, .35}, {.7, .35, .7, .9}, {.7, .9, .3, .9}, {.3, .9, .3, .35}},
      /*p*/ {{.3, .35, .3, 1.0}, {.3, .35, .7, .35}, {.7, .35, .7, .75}, {.7, .75, .3, .75}},
      /*q*/ {{.7, .35, .3, .35}, {.3, .35, .3, .75}, {.3, .75, .7, .75}, {.7, .35, .7, 1.0}},
      /*r*/ {{.35, .9, .35, .35}, {.35, .5, .55, .35}, {.55, .35, .7, .4}},
      /*s*/ {{.7, .35, .3, .35}, {.3, .35, .3, .6}, {.3, .6, .7, .6}, {.7, .6, .7, .9}, {.7, .9, .3, .9}},
      /*t*/ {{.45, .1, .45, .85}, {.45, .85, .65, .9}, {.25, .35, .65, .35}},
      /*u*/ {{.3, .35, .3, .85}, {.3, .85, .7, .9}, {.7, .35, .7, .9}},
      /*v*/ {{.25, .35, .5, .9}, {.5, .9, .75, .35}},
      /*w*/ {{.2, .35, .35, .9}, {.35, .9, .5, .5}, {.5, .5, .65, .9}, {.65, .9, .8, .35}},
      /*x*/ {{.25, .35, .75, .9}, {.75, .35, .25, .9}},
      /*y*/ {{.3, .35, .5, .7}, {.75, .35, .4, 1.0}},
      /*z*/ {{.25, .35, .75, .35}, {.75, .35, .25, .9}, {.25, .9, .75, .9}},
  };
  return table.at(static_cast<std::size_t>(char_index));
}

struct WriterStyle {
  double slant;
  double thickness;  // fraction of image size
  double offset_x, offset_y;
  double scale;
  std::uint8_t ink[3];
};

WriterStyle writer_style(int writer, const RngStream& base) {
  RngStream s = base.derive("writer").derive(static_cast<std::uint64_t>(writer));
  WriterStyle style;
  style.slant = s.next_uniform(-0.35, 0.35);
  style.thickness = s.next_uniform(0.025, 0.06);
  style.offset_x = s.next_uniform(-0.08, 0.08);
  style.offset_y = s.next_uniform(-0.08, 0.08);
  style.scale = s.next_uniform(0.55, 0.8);
  for (int c = 0; c < 3; ++c) {
    style.ink[c] = static_cast<std::uint8_t>(std::lround(s.next_uniform(0.0, 115.0)));
  }
  return style;
}

void stamp_disc(Image& img, double cx, double cy, double radius, const std::uint8_t ink[3]) {
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(cx + radius)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(cy + radius)));
  const double r2 = radius * radius;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - cx, dy = y - cy;
      if (dx * dx + dy * dy <= r2) {
        for (int c = 0; c < 3; ++c) {
          img.at(x, y, c) = std::min(img.at(x, y, c), ink[c]);
        }
      }
    }
  }
}

}  // namespace

Image render_synth_glyph(int writer, int char_index, int repetition, int image_size,
                         const RngStream& stream) {
  if (image_size < 16) {
    throw RangeError("synthetic glyphs need an image size of at least 16 pixels");
  }
  const WriterStyle style = writer_style(writer, stream);

  const std::uint64_t image_key = (static_cast<std::uint64_t>(writer) << 32) ^
                                  (static_cast<std::uint64_t>(char_index) << 8) ^
                                  static_cast<std::uint64_t>(repetition);
  RngStream jitter = stream.derive("image").derive(image_key);
  const double slant = style.slant + jitter.next_uniform(-0.06, 0.06);
  const double off_x = style.offset_x + jitter.next_uniform(-0.02, 0.02);
  const double off_y = style.offset_y + jitter.next_uniform(-0.02, 0.02);
  const double scale = std::clamp(style.scale + jitter.next_uniform(-0.05, 0.05), 0.3, 0.95);

  Image img = Image::create(image_size, image_size, 3, 255);
  const double s = static_cast<double>(image_size);
  const double radius = std::max(1.0, style.thickness * s);

  const auto to_canvas = [&](double gx, double gy, double& px, double& py) {
    const double sheared = gx + slant * (0.5 - gy);
    px = (0.5 + (sheared - 0.5) * scale + off_x) * s;
    py = (0.5 + (gy - 0.5) * scale + off_y) * s;
  };

  for (const Segment& seg : glyph_segments(char_index)) {
    double ax, ay, bx, by;
    to_canvas(seg.x1, seg.y1, ax, ay);
    to_canvas(seg.x2, seg.y2, bx, by);
    const double len = std::hypot(bx - ax, by - ay);
    const int steps = std::max(2, static_cast<int>(std::ceil(len * 2.0)));
    for (int i = 0; i <= steps; ++i) {
      const double t = static_cast<double>(i) / steps;
      stamp_disc(img, ax + (bx - ax) * t, ay + (by - ay) * t, radius, style.ink);
    }
  }
  return img;
}

SynthOutput synth_dataset(const fs::path& out_dir, int n_writers, int chars_per_writer,
                          int image_size, const RngStream& stream) {
  if (n_writers < 2) {
    throw RangeError("synthetic corpus needs at least 2 writers");
  }
  if (chars_per_writer < 1) {
    throw RangeError("chars_per_writer must be >= 1");
  }
  if (image_size < 16) {
    throw RangeError("synthetic glyphs need an image size of at least 16 pixels");
  }

  SynthOutput output;
  output.crops_dir = out_dir / "crops";
  output.writers_csv = out_dir / "writers.csv";
  output.manifest_csv = out_dir / "manifest.csv";
  fs::create_directories(output.crops_dir);

  std::vector<WriterRecord> writers;
  for (int w = 0; w < n_writers; ++w) {
    RngStream body = stream.derive("body").derive(static_cast<std::uint64_t>(w));
    WriterRecord rec;
    rec.writer_id = w;
    // Round before recomputing so the stored BMI matches the CSV text.
    rec.height_m = std::round(body.next_uniform(1.50, 1.95) * 10000.0) / 10000.0;
    rec.weight_kg = std::round(body.next_uniform(45.0, 100.0) * 10000.0) / 10000.0;
    rec.bmi = std::round(bmi(rec.height_m, rec.weight_kg) * 10000.0) / 10000.0;
    rec.class_index = w;
    writers.push_back(rec);
  }
  save_writer_table(writers, output.writers_csv);

  for (int w = 0; w < n_writers; ++w) {
    const fs::path writer_dir = output.crops_dir / std::to_string(w);
    fs::create_directories(writer_dir);
    for (int i = 0; i < chars_per_writer; ++i) {
      const int char_index = i % 26;
      const int repetition = i / 26 + 1;
      const Image img = render_synth_glyph(w, char_index, repetition, image_size, stream);
      const std::string name = std::string(1, static_cast<char>('a' + char_index)) + "_" +
                               std::to_string(repetition) + ".ppm";
      save_image(img, writer_dir / name);
      ++output.images_written;
    }
  }

  Manifest manifest = build_manifest(output.crops_dir, output.writers_csv);
  manifest.save_rows(output.manifest_csv);
  return output;
}

}  // namespace scriptbmi
