#include "scriptbmi/image.hpp"

#include <fstream>

namespace scriptbmi {

namespace fs = std::filesystem;

Image Image::create(int width, int height, int channels, std::uint8_t fill) {
  if (width < 1 || height < 1 || (channels != 1 && channels != 3)) {
    throw RangeError("image geometry must be positive with 1 or 3 channels");
  }
  Image img;
  img.width = width;
  img.height = height;
  img.channels = channels;
  img.pixels.assign(static_cast<std::size_t>(width) * height * channels, fill);
  return img;
}

namespace {

// Skips whitespace and '#' comment lines between header tokens.
int next_header_int(std::istream& in, const fs::path& file) {
  while (true) {
    const int c = in.peek();
    if (c == EOF) {
      throw FormatError("truncated header in " + file.string());
    }
    if (c == '#') {
      std::string line;
      std::getline(in, line);
      continue;
    }
    if (std::isspace(c)) {
      in.get();
      continue;
    }
    break;
  }
  int value = 0;
  if (!(in >> value)) {
    throw FormatError("malformed header in " + file.string());
  }
  return value;
}

}  // namespace

Image load_image(const fs::path& file, bool promote_gray) {
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    throw IoError("cannot open image " + file.string());
  }
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (!in || m0 != 'P' || (m1 != '5' && m1 != '6')) {
    throw FormatError(file.string() + " is not a binary P5/P6 portable raster");
  }
  const int channels = (m1 == '6') ? 3 : 1;
  const int width = next_header_int(in, file);
  const int height = next_header_int(in, file);
  const int maxval = next_header_int(in, file);
  if (width < 1 || height < 1) {
    throw FormatError(file.string() + " has a non-positive image size");
  }
  if (maxval != 255) {
    throw FormatError(file.string() + " must be 8-bit (maxval 255), got " +
                      std::to_string(maxval));
  }
  in.get();  // single whitespace byte after maxval

  const std::size_t n = static_cast<std::size_t>(width) * height * channels;
  std::vector<std::uint8_t> raw(n);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw FormatError(file.string() + " is truncated: expected " + std::to_string(n) +
                      " pixel bytes");
  }

  Image img;
  img.width = width;
  img.height = height;
  if (channels == 1 && promote_gray) {
    img.channels = 3;
    img.pixels.resize(n * 3);
    for (std::size_t i = 0; i < n; ++i) {
      img.pixels[3 * i] = img.pixels[3 * i + 1] = img.pixels[3 * i + 2] = raw[i];
    }
  } else {
    img.channels = channels;
    img.pixels = std::move(raw);
  }
  return img;
}

void save_image(const Image& img, const fs::path& file) {
  if (img.channels != 1 && img.channels != 3) {
    throw RangeError("save_image supports 1 or 3 channels");
  }
  std::ofstream out(file, std::ios::binary);
  if (!out) {
    throw IoError("cannot write image " + file.string());
  }
  out << (img.channels == 3 ? "P6" : "P5") << "\n"
      << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) {
    throw IoError("failed while writing image " + file.string());
  }
}

}  // namespace scriptbmi
