#pragma once

#include <filesystem>

#include "scriptbmi/image.hpp"
#include "scriptbmi/manifest.hpp"
#include "scriptbmi/rng.hpp"

namespace scriptbmi {

struct SynthOutput {
  std::filesystem::path crops_dir;
  std::filesystem::path writers_csv;
  std::filesystem::path manifest_csv;
  std::size_t images_written = 0;
};

// Desk-scale stand-in corpus: per-writer stroke glyphs with deterministic
// slant/thickness/offset/ink-colour style plus small per-image jitter, so
// writers are separable from pixels alone. Fabricates a plausible
// height/weight per writer and emits crops, the writer table and a manifest
// in the standard layout. chars_per_writer cycles a-z, bumping the
// repetition index on each full pass.
SynthOutput synth_dataset(const std::filesystem::path& out_dir, int n_writers,
                          int chars_per_writer, int image_size, const RngStream& stream);

// In-memory render of one synthetic crop (also used by unit tests).
Image render_synth_glyph(int writer, int char_index, int repetition, int image_size,
                         const RngStream& stream);

}  // namespace scriptbmi
