#include "scriptbmi/dataset.hpp"

#include "scriptbmi/imaging.hpp"

namespace scriptbmi {

namespace {
// Keep everything resident below this budget; beyond it, decode per sample.
constexpr std::size_t kCacheBudgetBytes = 512ull << 20;
}  // namespace

CropDataset::CropDataset(const Manifest& manifest, Split split,
                         const std::filesystem::path& base_dir, int height, int width,
                         int channels)
    : height_(height), width_(width), channels_(channels) {
  if (channels != 1 && channels != 3) {
    throw RangeError("CropDataset supports 1 or 3 channels");
  }
  for (const ManifestRow& row : manifest.rows) {
    if (row.split != split) continue;
    const int label = manifest.class_of(row.writer_id);
    if (label < 0) {
      throw ManifestError("row " + row.image_path + " has an unknown writer");
    }
    entries_.push_back({base_dir / row.image_path, label});
  }
  const std::size_t bytes_per_sample =
      static_cast<std::size_t>(height_) * width_ * channels_ * sizeof(double);
  if (entries_.size() * bytes_per_sample <= kCacheBudgetBytes) {
    cache_.reserve(entries_.size());
    for (const Entry& e : entries_) {
      cache_.push_back(load_entry(e));
    }
    cached_ = true;
  }
}

Sample CropDataset::load_entry(const Entry& entry) const {
  Image img = load_image(entry.file, channels_ == 3);
  if (channels_ == 1 && img.channels == 3) {
    // Grayscale mode: channel mean, matching the thresholding convention.
    Image gray = Image::create(img.width, img.height, 1);
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        const int sum = img.at(x, y, 0) + img.at(x, y, 1) + img.at(x, y, 2);
        gray.at(x, y, 0) = static_cast<std::uint8_t>(sum / 3);
      }
    }
    img = std::move(gray);
  }
  if (img.height != height_ || img.width != width_) {
    img = resize_bilinear(img, height_, width_);
  }
  return {normalize(img), entry.label};
}

Sample CropDataset::sample(std::size_t index) const {
  if (cached_) return cache_.at(index);
  return load_entry(entries_.at(index));
}

}  // namespace scriptbmi
