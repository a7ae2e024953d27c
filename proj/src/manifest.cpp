#include "scriptbmi/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "scriptbmi/rng.hpp"

namespace scriptbmi {

namespace fs = std::filesystem;

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    case Split::Unassigned: break;
  }
  return "unassigned";
}

Split split_from_name(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  if (name == "unassigned") return Split::Unassigned;
  throw FormatError("unknown split name '" + std::string(name) + "'");
}

double bmi(double height_m, double weight_kg) {
  if (height_m <= 0.0 || weight_kg <= 0.0) {
    throw RangeError("bmi requires positive height and weight");
  }
  return weight_kg / (height_m * height_m);
}

int Manifest::class_of(int writer_id) const {
  for (const WriterRecord& w : writers) {
    if (w.writer_id == writer_id) return w.class_index;
  }
  return -1;
}

std::size_t Manifest::count_in(Split s) const {
  std::size_t n = 0;
  for (const ManifestRow& r : rows) {
    if (r.split == s) ++n;
  }
  return n;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string format_fixed(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

void Manifest::save_rows(const fs::path& file) const {
  std::ofstream out(file);
  if (!out) {
    throw IoError("cannot write manifest " + file.string());
  }
  out << "image_path,writer_id,char_label,repetition,split\n";
  for (const ManifestRow& r : rows) {
    out << r.image_path << "," << r.writer_id << "," << r.char_label << "," << r.repetition << ","
        << split_name(r.split) << "\n";
  }
}

std::vector<ManifestRow> Manifest::load_rows(const fs::path& file) {
  std::ifstream in(file);
  if (!in) {
    throw IoError("cannot open manifest " + file.string());
  }
  std::string line;
  if (!std::getline(in, line) || !line.starts_with("image_path,")) {
    throw FormatError("manifest " + file.string() + " is missing its header row");
  }
  std::vector<ManifestRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 5 || fields[2].size() != 1) {
      throw FormatError("manifest " + file.string() + " line " + std::to_string(line_no) +
                        " is malformed");
    }
    ManifestRow row;
    row.image_path = fields[0];
    try {
      row.writer_id = std::stoi(fields[1]);
      row.repetition = std::stoi(fields[3]);
    } catch (const std::exception&) {
      throw FormatError("manifest " + file.string() + " line " + std::to_string(line_no) +
                        " holds a non-numeric field");
    }
    row.char_label = fields[2][0];
    row.split = split_from_name(fields[4]);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<WriterRecord> load_writer_table(const fs::path& file, double bmi_tolerance) {
  std::ifstream in(file);
  if (!in) {
    throw IoError("cannot open writer table " + file.string());
  }
  std::string line;
  if (!std::getline(in, line) || !line.starts_with("writer_id,")) {
    throw FormatError("writer table " + file.string() + " is missing its header row");
  }
  std::vector<WriterRecord> writers;
  std::vector<std::string> bad_rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 4) {
      throw FormatError("writer table " + file.string() + " line " + std::to_string(line_no) +
                        " is malformed");
    }
    WriterRecord w;
    try {
      w.writer_id = std::stoi(fields[0]);
      w.height_m = std::stod(fields[1]);
      w.weight_kg = std::stod(fields[2]);
      w.bmi = std::stod(fields[3]);
    } catch (const std::exception&) {
      throw FormatError("writer table " + file.string() + " line " + std::to_string(line_no) +
                        " holds a non-numeric field");
    }
    if (w.height_m <= 0.0 || w.weight_kg <= 0.0) {
      throw ValidationError("writer table line " + std::to_string(line_no) +
                            ": height and weight must be positive");
    }
    if (std::abs(w.bmi - bmi(w.height_m, w.weight_kg)) > bmi_tolerance) {
      bad_rows.push_back("line " + std::to_string(line_no) + " (writer " +
                         std::to_string(w.writer_id) + "): stored " + format_fixed(w.bmi) +
                         " vs recomputed " + format_fixed(bmi(w.height_m, w.weight_kg)));
    }
    writers.push_back(w);
  }
  if (!bad_rows.empty()) {
    std::string msg = "BMI mismatch beyond " + format_fixed(bmi_tolerance) + " in " +
                      file.string() + ":";
    for (const auto& r : bad_rows) msg += "\n  " + r;
    throw ValidationError(msg);
  }
  std::sort(writers.begin(), writers.end(),
            [](const WriterRecord& a, const WriterRecord& b) { return a.writer_id < b.writer_id; });
  for (std::size_t i = 1; i < writers.size(); ++i) {
    if (writers[i].writer_id == writers[i - 1].writer_id) {
      throw ManifestError("duplicate writer id " + std::to_string(writers[i].writer_id) +
                          " in " + file.string());
    }
  }
  for (std::size_t i = 0; i < writers.size(); ++i) {
    writers[i].class_index = static_cast<int>(i);
  }
  return writers;
}

void save_writer_table(std::span<const WriterRecord> writers, const fs::path& file) {
  std::ofstream out(file);
  if (!out) {
    throw IoError("cannot write writer table " + file.string());
  }
  out << "writer_id,height_m,weight_kg,bmi\n";
  for (const WriterRecord& w : writers) {
    out << w.writer_id << "," << format_fixed(w.height_m) << "," << format_fixed(w.weight_kg)
        << "," << format_fixed(w.bmi) << "\n";
  }
}

namespace {

bool parse_crop_name(const std::string& stem, char& char_label, int& repetition) {
  // "<char>_<rep>" with an optional augmentation suffix, e.g. "g_2_blur".
  if (stem.size() < 3 || stem[1] != '_') return false;
  if (stem[0] < 'a' || stem[0] > 'z') return false;
  std::size_t pos = 2;
  std::size_t digits = 0;
  int rep = 0;
  while (pos < stem.size() && std::isdigit(static_cast<unsigned char>(stem[pos]))) {
    rep = rep * 10 + (stem[pos] - '0');
    ++pos;
    ++digits;
  }
  if (digits == 0 || rep < 1) return false;
  if (pos != stem.size() && stem[pos] != '_') return false;
  char_label = stem[0];
  repetition = rep;
  return true;
}

}  // namespace

Manifest build_manifest(const fs::path& crop_dir, const fs::path& writer_csv,
                        double bmi_tolerance) {
  Manifest manifest;
  manifest.writers = load_writer_table(writer_csv, bmi_tolerance);
  if (!fs::exists(crop_dir) || !fs::is_directory(crop_dir)) {
    throw IoError("crop directory " + crop_dir.string() + " does not exist");
  }

  const fs::path base = crop_dir.has_parent_path() ? crop_dir.parent_path() : fs::path(".");
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(crop_dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension();
    if (ext == ".ppm" || ext == ".pgm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  if (files.empty()) {
    manifest.warnings.push_back("crop directory " + crop_dir.string() + " holds no images");
    return manifest;
  }

  for (const fs::path& file : files) {
    const std::string writer_dir = file.parent_path().filename().string();
    int writer_id = 0;
    try {
      std::size_t used = 0;
      writer_id = std::stoi(writer_dir, &used);
      if (used != writer_dir.size()) throw std::invalid_argument(writer_dir);
    } catch (const std::exception&) {
      throw ManifestError("crop " + file.string() + " is not inside a numeric writer directory");
    }
    if (manifest.class_of(writer_id) < 0) {
      throw ManifestError("crop " + file.string() + " references writer " +
                          std::to_string(writer_id) + " missing from the writer table");
    }
    ManifestRow row;
    if (!parse_crop_name(file.stem().string(), row.char_label, row.repetition)) {
      throw ManifestError("crop filename " + file.filename().string() +
                          " does not match <char>_<rep>[_variant].ppm");
    }
    row.writer_id = writer_id;
    row.image_path = fs::relative(file, base).generic_string();
    manifest.rows.push_back(std::move(row));
  }

  // Paths must be unique; sorted input means duplicates are adjacent.
  for (std::size_t i = 1; i < manifest.rows.size(); ++i) {
    if (manifest.rows[i].image_path == manifest.rows[i - 1].image_path) {
      throw ManifestError("duplicate manifest path " + manifest.rows[i].image_path);
    }
  }
  return manifest;
}

namespace {

// Key shared by a crop and its augmented variants: path minus any suffix.
std::string source_key(const std::string& image_path) {
  const std::size_t dot = image_path.find_last_of('.');
  std::string stem = dot == std::string::npos ? image_path : image_path.substr(0, dot);
  static constexpr std::string_view kVariants[] = {"_blur", "_noise", "_jitter",
                                                   "_bright", "_contrast", "_sharp"};
  for (std::string_view v : kVariants) {
    if (stem.size() > v.size() && stem.ends_with(v)) {
      stem.resize(stem.size() - v.size());
      break;
    }
  }
  return stem;
}

}  // namespace

void assign_splits(Manifest& manifest, std::array<double, 3> ratios, std::uint64_t seed,
                   bool group_by_source) {
  for (double r : ratios) {
    if (r <= 0.0) throw RangeError("split ratios must be positive");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    throw RangeError("split ratios must sum to 1");
  }

  // Class -> list of shuffle units (single rows, or whole source groups).
  std::map<int, std::vector<std::vector<std::size_t>>> units_per_class;
  if (group_by_source) {
    std::map<int, std::map<std::string, std::vector<std::size_t>>> grouped;
    for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
      const int cls = manifest.class_of(manifest.rows[i].writer_id);
      if (cls < 0) {
        throw ManifestError("row " + manifest.rows[i].image_path + " has an unknown writer");
      }
      grouped[cls][source_key(manifest.rows[i].image_path)].push_back(i);
    }
    for (auto& [cls, by_source] : grouped) {
      for (auto& [key, indices] : by_source) {
        units_per_class[cls].push_back(std::move(indices));
      }
    }
  } else {
    for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
      const int cls = manifest.class_of(manifest.rows[i].writer_id);
      if (cls < 0) {
        throw ManifestError("row " + manifest.rows[i].image_path + " has an unknown writer");
      }
      units_per_class[cls].push_back({i});
    }
  }

  RngStream base(seed, "split");
  for (auto& [cls, units] : units_per_class) {
    RngStream stream = base.derive(static_cast<std::uint64_t>(cls));
    const std::vector<std::size_t> order = shuffled_indices(units.size(), stream);

    const std::size_t n = units.size();
    // Tiny epsilon so ratios like 0.3 whose binary form rounds down still
    // floor to the intended integer on exact products.
    std::size_t n_val =
        static_cast<std::size_t>(std::floor(ratios[1] * static_cast<double>(n) + 1e-9));
    std::size_t n_test =
        static_cast<std::size_t>(std::floor(ratios[2] * static_cast<double>(n) + 1e-9));
    if (n < 3) {
      manifest.warnings.push_back("class " + std::to_string(cls) + " has only " +
                                  std::to_string(n) + " unit(s); all assigned to train");
      n_val = n_test = 0;
    }
    const std::size_t n_train = n - n_val - n_test;

    for (std::size_t pos = 0; pos < n; ++pos) {
      Split s = Split::Train;
      if (pos >= n_train && pos < n_train + n_val) {
        s = Split::Val;
      } else if (pos >= n_train + n_val) {
        s = Split::Test;
      }
      for (std::size_t row_idx : units[order[pos]]) {
        manifest.rows[row_idx].split = s;
      }
    }
  }
}

std::vector<double> class_bmi_table(std::span<const WriterRecord> writers) {
  std::vector<double> table(writers.size(), 0.0);
  std::vector<bool> seen(writers.size(), false);
  for (const WriterRecord& w : writers) {
    if (w.class_index < 0 || static_cast<std::size_t>(w.class_index) >= table.size() ||
        seen[static_cast<std::size_t>(w.class_index)]) {
      throw ManifestError("writer " + std::to_string(w.writer_id) +
                          " has a duplicate or out-of-range class index");
    }
    seen[static_cast<std::size_t>(w.class_index)] = true;
    table[static_cast<std::size_t>(w.class_index)] = w.bmi;
  }
  return table;
}

std::vector<double> class_bmi_table(const Manifest& manifest) {
  return class_bmi_table(std::span<const WriterRecord>(manifest.writers));
}

BmiPrediction predict_bmi(const Tensor& probs, std::span<const double> class_bmi) {
  const Tensor flat = probs.rank() == 2 && probs.extent(0) == 1
                          ? probs.reshaped({probs.extent(1)})
                          : probs;
  if (flat.rank() != 1) {
    throw ShapeError("predict_bmi expects a probability vector, got " +
                     shape_to_string(probs.shape()));
  }
  if (flat.size() != class_bmi.size()) {
    throw ShapeError("probability vector length " + std::to_string(flat.size()) +
                     " does not match BMI table length " + std::to_string(class_bmi.size()));
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < flat.size(); ++i) {
    if (flat[i] > flat[best]) best = i;
  }
  return {static_cast<int>(best), class_bmi[best], flat[best]};
}

}  // namespace scriptbmi
