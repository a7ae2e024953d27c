#pragma once

#include <filesystem>

#include "scriptbmi/manifest.hpp"
#include "scriptbmi/train.hpp"

namespace scriptbmi {

// Manifest-backed sample source: loads a crop, resizes it to the model input
// when needed and normalizes it; the label is the writer's class index.
// Small datasets are decoded once up front, large ones stay on disk.
class CropDataset final : public Dataset {
 public:
  CropDataset(const Manifest& manifest, Split split, const std::filesystem::path& base_dir,
              int height, int width, int channels = 3);

  std::size_t size() const override { return entries_.size(); }
  Sample sample(std::size_t index) const override;

 private:
  struct Entry {
    std::filesystem::path file;
    int label;
  };
  Sample load_entry(const Entry& entry) const;

  std::vector<Entry> entries_;
  std::vector<Sample> cache_;
  bool cached_ = false;
  int height_, width_, channels_;
};

}  // namespace scriptbmi
