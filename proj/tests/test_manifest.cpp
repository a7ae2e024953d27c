#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "scriptbmi/image.hpp"
#include "scriptbmi/layers.hpp"
#include "scriptbmi/manifest.hpp"
#include "test_support.hpp"

using namespace scriptbmi;

namespace {

void write_writer_csv(const std::filesystem::path& file, const std::vector<std::string>& rows) {
  std::ofstream out(file);
  out << "writer_id,height_m,weight_kg,bmi\n";
  for (const auto& r : rows) out << r << "\n";
}

void make_crop(const std::filesystem::path& file) {
  std::filesystem::create_directories(file.parent_path());
  save_image(Image::create(8, 8, 3, 200), file);
}

}  // namespace

TEST_CASE("bmi formula and guards") {
  CHECK(bmi(1.0, 63.0) == 63.0);
  CHECK(bmi(1.75, 70.0) == doctest::Approx(22.8571).epsilon(1e-4));
  CHECK_THROWS_AS(bmi(0.0, 70.0), RangeError);
  CHECK_THROWS_AS(bmi(1.7, -1.0), RangeError);
}

TEST_CASE("bmi agrees with an independent recomputation") {
  RngStream rng(3, "bmi");
  for (int i = 0; i < 10000; ++i) {
    const double h = rng.next_uniform(1.2, 2.2);
    const double w = rng.next_uniform(35.0, 150.0);
    const double reference = w / h / h;
    CHECK(std::abs(bmi(h, w) - reference) <= 1e-12);
  }
}

TEST_CASE("build_manifest joins crops with the writer table") {
  testsup::TempDir tmp("manifest");
  const auto root = tmp.path;
  write_writer_csv(root / "writers.csv", {"0,1.7500,70.0000,22.8571", "1,1.6000,60.0000,23.4375"});
  make_crop(root / "crops" / "0" / "a_1.ppm");
  make_crop(root / "crops" / "0" / "b_1.ppm");
  make_crop(root / "crops" / "1" / "a_1.ppm");

  const Manifest manifest = build_manifest(root / "crops", root / "writers.csv");
  CHECK(manifest.rows.size() == 3);
  CHECK(manifest.writers.size() == 2);
  CHECK(manifest.class_of(1) == 1);
  CHECK(manifest.rows[0].image_path == "crops/0/a_1.ppm");
  CHECK(manifest.rows[0].char_label == 'a');
  CHECK(manifest.rows[0].repetition == 1);
  CHECK(manifest.rows[0].split == Split::Unassigned);

  // Round-trip through the CSV form.
  manifest.save_rows(root / "manifest.csv");
  const auto rows = Manifest::load_rows(root / "manifest.csv");
  REQUIRE(rows.size() == 3);
  CHECK(rows[2].image_path == "crops/1/a_1.ppm");
}

TEST_CASE("build_manifest failure modes") {
  testsup::TempDir tmp("manifest_bad");
  const auto root = tmp.path;

  write_writer_csv(root / "writers.csv", {"0,1.7500,70.0000,22.8571"});
  std::filesystem::create_directories(root / "crops");
  const Manifest empty = build_manifest(root / "crops", root / "writers.csv");
  CHECK(empty.rows.empty());
  CHECK(!empty.warnings.empty());

  // Orphan writer directory.
  make_crop(root / "crops" / "7" / "a_1.ppm");
  CHECK_THROWS_AS(build_manifest(root / "crops", root / "writers.csv"), ManifestError);
  std::filesystem::remove_all(root / "crops" / "7");

  // Stored BMI disagrees with height/weight (25.0 vs 22.86).
  write_writer_csv(root / "bad_writers.csv", {"0,1.7500,70.0000,25.0000"});
  make_crop(root / "crops" / "0" / "a_1.ppm");
  CHECK_THROWS_AS(build_manifest(root / "crops", root / "bad_writers.csv"), ValidationError);

  // Within tolerance passes by default, fails under the strict tolerance.
  write_writer_csv(root / "near_writers.csv", {"0,1.7500,70.0000,22.8596"});
  CHECK_NOTHROW(build_manifest(root / "crops", root / "near_writers.csv"));
  CHECK_THROWS_AS(build_manifest(root / "crops", root / "near_writers.csv", 1e-9),
                  ValidationError);

  // Malformed crop name.
  make_crop(root / "crops" / "0" / "weird.ppm");
  CHECK_THROWS_AS(build_manifest(root / "crops", root / "writers.csv"), ManifestError);
}

namespace {

Manifest synthetic_manifest(int writers, int per_writer) {
  Manifest manifest;
  for (int w = 0; w < writers; ++w) {
    WriterRecord rec;
    rec.writer_id = w;
    rec.height_m = 1.7;
    rec.weight_kg = 60.0 + w;
    rec.bmi = bmi(rec.height_m, rec.weight_kg);
    rec.class_index = w;
    manifest.writers.push_back(rec);
    for (int i = 0; i < per_writer; ++i) {
      ManifestRow row;
      row.image_path = std::to_string(w) + "/img_" + std::to_string(i + 1) + ".ppm";
      row.writer_id = w;
      row.char_label = static_cast<char>('a' + i % 26);
      row.repetition = 1;
      manifest.rows.push_back(row);
    }
  }
  return manifest;
}

}  // namespace

TEST_CASE("malformed CSVs fail closed") {
  testsup::TempDir tmp("csv_bad");
  std::ofstream(tmp.path / "writers.csv")
      << "writer_id,height_m,weight_kg,bmi\nzero,1.75,70,22.8571\n";
  CHECK_THROWS_AS(load_writer_table(tmp.path / "writers.csv"), FormatError);

  std::ofstream(tmp.path / "manifest.csv")
      << "image_path,writer_id,char_label,repetition,split\nx.ppm,NaNwriter,a,1,train\n";
  CHECK_THROWS_AS(Manifest::load_rows(tmp.path / "manifest.csv"), FormatError);

  std::ofstream(tmp.path / "noheader.csv") << "1,2,3\n";
  CHECK_THROWS_AS(Manifest::load_rows(tmp.path / "noheader.csv"), FormatError);
  CHECK_THROWS_AS(load_writer_table(tmp.path / "noheader.csv"), FormatError);
}

TEST_CASE("split partitions every row exactly once with the documented counts") {
  Manifest manifest = synthetic_manifest(1, 100);
  assign_splits(manifest, {0.7, 0.15, 0.15}, 42);
  CHECK(manifest.count_in(Split::Train) == 70);
  CHECK(manifest.count_in(Split::Val) == 15);
  CHECK(manifest.count_in(Split::Test) == 15);
  CHECK(manifest.count_in(Split::Unassigned) == 0);
}

TEST_CASE("split is stratified and deterministic per seed") {
  Manifest manifest = synthetic_manifest(6, 46);
  assign_splits(manifest, {0.7, 0.15, 0.15}, 42);

  // Per class: floor(0.15*46)=6 val, 6 test, 34 train.
  for (int cls = 0; cls < 6; ++cls) {
    int train = 0, val = 0, test = 0;
    for (const auto& row : manifest.rows) {
      if (row.writer_id != cls) continue;
      if (row.split == Split::Train) ++train;
      if (row.split == Split::Val) ++val;
      if (row.split == Split::Test) ++test;
    }
    CHECK(train == 34);
    CHECK(val == 6);
    CHECK(test == 6);
  }

  Manifest again = synthetic_manifest(6, 46);
  assign_splits(again, {0.7, 0.15, 0.15}, 42);
  for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
    CHECK(manifest.rows[i].split == again.rows[i].split);
  }

  Manifest other = synthetic_manifest(6, 46);
  assign_splits(other, {0.7, 0.15, 0.15}, 43);
  bool any_difference = false;
  for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
    if (manifest.rows[i].split != other.rows[i].split) any_difference = true;
  }
  CHECK(any_difference);
}

TEST_CASE("paper-scale split counts come out exactly") {
  // 48 writers x 546 images (26x3 crops x 7 variants) = 26208.
  Manifest manifest = synthetic_manifest(48, 546);
  REQUIRE(manifest.rows.size() == 26208);
  assign_splits(manifest, {0.7, 0.15, 0.15}, 42);
  CHECK(manifest.count_in(Split::Train) == 18432);
  CHECK(manifest.count_in(Split::Val) == 3888);
  CHECK(manifest.count_in(Split::Test) == 3888);
}

TEST_CASE("tiny classes fall back to train with a warning") {
  Manifest manifest = synthetic_manifest(2, 2);
  assign_splits(manifest, {0.7, 0.15, 0.15}, 42);
  CHECK(manifest.count_in(Split::Train) == 4);
  CHECK(manifest.warnings.size() == 2);
}

TEST_CASE("split ratio validation") {
  Manifest manifest = synthetic_manifest(1, 10);
  CHECK_THROWS_AS(assign_splits(manifest, {0.5, 0.2, 0.2}, 1), RangeError);
  CHECK_THROWS_AS(assign_splits(manifest, {0.9, 0.2, -0.1}, 1), RangeError);
}

TEST_CASE("grouped split keeps augmented variants together") {
  Manifest manifest;
  WriterRecord rec;
  rec.writer_id = 0;
  rec.height_m = 1.7;
  rec.weight_kg = 70.0;
  rec.bmi = bmi(1.7, 70.0);
  rec.class_index = 0;
  manifest.writers.push_back(rec);
  const std::vector<std::string> suffixes = {"",       "_blur",     "_noise", "_jitter",
                                             "_bright", "_contrast", "_sharp"};
  for (int src = 0; src < 20; ++src) {
    for (const auto& suffix : suffixes) {
      ManifestRow row;
      row.image_path = "0/c_" + std::to_string(src + 1) + suffix + ".ppm";
      row.writer_id = 0;
      row.char_label = 'c';
      row.repetition = src + 1;
      manifest.rows.push_back(row);
    }
  }
  assign_splits(manifest, {0.7, 0.15, 0.15}, 42, /*group_by_source=*/true);

  // 20 groups -> 14 train, 3 val, 3 test; all 7 variants share a split.
  CHECK(manifest.count_in(Split::Train) == 14 * 7);
  CHECK(manifest.count_in(Split::Val) == 3 * 7);
  CHECK(manifest.count_in(Split::Test) == 3 * 7);
  for (int src = 0; src < 20; ++src) {
    std::set<Split> splits;
    for (const auto& row : manifest.rows) {
      if (row.repetition == src + 1) splits.insert(row.split);
    }
    CHECK(splits.size() == 1);
  }
}

TEST_CASE("class_bmi_table ordering and duplicate detection") {
  Manifest manifest = synthetic_manifest(4, 1);
  const auto table = class_bmi_table(manifest);
  REQUIRE(table.size() == 4);
  for (int w = 0; w < 4; ++w) {
    CHECK(table[w] == doctest::Approx(bmi(1.7, 60.0 + w)).epsilon(1e-12));
  }

  // Two writers sharing a BMI value still occupy distinct classes.
  Manifest shared = synthetic_manifest(2, 1);
  shared.writers[1].weight_kg = shared.writers[0].weight_kg;
  shared.writers[1].bmi = shared.writers[0].bmi;
  const auto shared_table = class_bmi_table(shared);
  CHECK(shared_table.size() == 2);
  CHECK(shared_table[0] == shared_table[1]);

  shared.writers[1].class_index = 0;  // duplicate class
  CHECK_THROWS_AS(class_bmi_table(shared), ManifestError);
}

TEST_CASE("predict_bmi argmax, ties and errors") {
  const std::vector<double> table = {20.0, 25.5, 30.0};
  Tensor onehot({3});
  onehot[1] = 1.0;
  const BmiPrediction top = predict_bmi(onehot, table);
  CHECK(top.class_index == 1);
  CHECK(top.bmi == 25.5);
  CHECK(top.confidence == 1.0);

  const Tensor uniform = Tensor::full({3}, 1.0 / 3.0);
  const BmiPrediction tie = predict_bmi(uniform, table);
  CHECK(tie.class_index == 0);
  CHECK(tie.confidence == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  Tensor probs({3});
  probs[0] = 0.1;
  probs[1] = 0.7;
  probs[2] = 0.2;
  CHECK(predict_bmi(probs, table).class_index == 1);

  CHECK_THROWS_AS(predict_bmi(Tensor({4}), table), ShapeError);
}

TEST_CASE("predict_bmi argmax is invariant under monotone transforms") {
  RngStream rng(9, "argmax");
  const std::vector<double> table = {1, 2, 3, 4, 5};
  for (int trial = 0; trial < 100; ++trial) {
    Tensor logits = testsup::random_tensor({5}, rng, -3.0, 3.0);
    Tensor squashed = nn::softmax(logits.reshaped({1, 5}));
    const int from_logits = predict_bmi(logits, table).class_index;
    const int from_probs = predict_bmi(squashed, table).class_index;
    CHECK(from_logits == from_probs);
  }
}
