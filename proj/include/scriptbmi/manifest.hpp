#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "scriptbmi/tensor.hpp"

namespace scriptbmi {

enum class Split { Unassigned, Train, Val, Test };

std::string_view split_name(Split s);
Split split_from_name(std::string_view name);

struct WriterRecord {
  int writer_id = 0;
  double height_m = 0.0;
  double weight_kg = 0.0;
  double bmi = 0.0;
  int class_index = 0;
};

struct ManifestRow {
  std::string image_path;  // relative to the dataset root
  int writer_id = 0;
  char char_label = 'a';
  int repetition = 1;
  Split split = Split::Unassigned;
};

struct Manifest {
  std::vector<ManifestRow> rows;
  std::vector<WriterRecord> writers;  // sorted by writer_id; class_index is the position
  std::vector<std::string> warnings;

  int class_of(int writer_id) const;  // -1 when unknown
  std::size_t count_in(Split s) const;

  void save_rows(const std::filesystem::path& file) const;
  static std::vector<ManifestRow> load_rows(const std::filesystem::path& file);
};

// weight / height^2, kg/m^2.
double bmi(double height_m, double weight_kg);

// CSV "writer_id,height_m,weight_kg,bmi"; rows whose stored BMI deviates
// from the recomputed value by more than `bmi_tolerance` fail validation,
// all offenders listed.
std::vector<WriterRecord> load_writer_table(const std::filesystem::path& file,
                                            double bmi_tolerance = 0.01);
void save_writer_table(std::span<const WriterRecord> writers, const std::filesystem::path& file);

// Scans crop_dir for "<writer>/<char>_<rep>[_variant].ppm" files and joins
// them with the writer table. Paths are stored relative to crop_dir's parent
// directory, where the manifest CSV conventionally lives.
Manifest build_manifest(const std::filesystem::path& crop_dir,
                        const std::filesystem::path& writer_csv, double bmi_tolerance = 0.01);

// Stratified per class: rows shuffle under a seeded stream, val/test take
// floor(ratio * n) each and train the remainder. With group_by_source all
// augmented variants of one crop move together.
void assign_splits(Manifest& manifest, std::array<double, 3> ratios, std::uint64_t seed,
                   bool group_by_source = false);

// class index -> that writer's BMI.
std::vector<double> class_bmi_table(const Manifest& manifest);
std::vector<double> class_bmi_table(std::span<const WriterRecord> writers);

struct BmiPrediction {
  int class_index = 0;
  double bmi = 0.0;
  double confidence = 0.0;
};

// argmax class (lowest index on exact ties) with its BMI and probability.
BmiPrediction predict_bmi(const Tensor& probs, std::span<const double> class_bmi);

}  // namespace scriptbmi
