#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "scriptbmi/ablation.hpp"
#include "scriptbmi/augment.hpp"
#include "scriptbmi/dataset.hpp"
#include "scriptbmi/imaging.hpp"
#include "scriptbmi/manifest.hpp"
#include "scriptbmi/model.hpp"
#include "scriptbmi/synth.hpp"
#include "scriptbmi/train.hpp"

namespace fs = std::filesystem;
using namespace scriptbmi;

namespace {

constexpr std::uint64_t kDefaultSeed = 42;

// Accepts a pixel count or the named preset "fig5" (the 144x144 geometry
// that reproduces the documented 72x72x64 -> 82944 shape chain).
int parse_input_size(const std::string& text) {
  if (text.empty()) return 0;
  if (text == "fig5") return 144;
  try {
    std::size_t used = 0;
    const int value = std::stoi(text, &used);
    if (used == text.size() && value > 0) return value;
  } catch (const std::exception&) {
  }
  throw RangeError("--input-size expects a positive pixel count or 'fig5'");
}

std::array<double, 3> parse_ratios(const std::string& text) {
  std::array<double, 3> ratios{};
  if (std::sscanf(text.c_str(), "%lf,%lf,%lf", &ratios[0], &ratios[1], &ratios[2]) != 3) {
    throw RangeError("--ratios expects three comma-separated numbers, e.g. 0.7,0.15,0.15");
  }
  return ratios;
}

void print_warnings(const Manifest& manifest) {
  for (const std::string& w : manifest.warnings) {
    std::cerr << "warning: " << w << "\n";
  }
}

fs::path sibling_writers(const fs::path& manifest_csv, const std::string& writers_flag) {
  if (!writers_flag.empty()) return writers_flag;
  return manifest_csv.parent_path() / "writers.csv";
}

Manifest load_dataset(const fs::path& manifest_csv, const std::string& writers_flag,
                      bool strict) {
  Manifest manifest;
  manifest.rows = Manifest::load_rows(manifest_csv);
  manifest.writers = load_writer_table(sibling_writers(manifest_csv, writers_flag),
                                       strict ? 1e-9 : 0.01);
  return manifest;
}

int cmd_synth(const fs::path& out_dir, int writers, int chars, int size, std::uint64_t seed) {
  RngStream stream(seed, "synth");
  const SynthOutput out = synth_dataset(out_dir, writers, chars, size, stream);
  std::cout << "wrote " << out.images_written << " crops under " << out.crops_dir.string()
            << "\nwriter table: " << out.writers_csv.string()
            << "\nmanifest: " << out.manifest_csv.string() << "\n";
  return 0;
}

int cmd_segment(const fs::path& sheets_dir, const fs::path& out_dir, int min_area, int pad) {
  if (!fs::exists(sheets_dir) || !fs::is_directory(sheets_dir)) {
    throw IoError("sheet directory " + sheets_dir.string() + " does not exist");
  }
  std::vector<fs::path> sheets;
  for (const auto& entry : fs::directory_iterator(sheets_dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension();
    if (ext == ".ppm" || ext == ".pgm") sheets.push_back(entry.path());
  }
  std::sort(sheets.begin(), sheets.end());

  fs::create_directories(out_dir);
  std::ofstream index(out_dir / "crop_index.csv");
  if (!index) {
    throw IoError("cannot write crop index under " + out_dir.string());
  }
  index << "sheet,seq,x,y,w,h\n";
  if (sheets.empty()) {
    std::cerr << "warning: no sheet images found in " << sheets_dir.string() << "\n";
    return 0;
  }

  std::size_t total = 0;
  for (const fs::path& sheet_file : sheets) {
    const Image sheet = load_image(sheet_file);
    const std::string stem = sheet_file.stem().string();
    const SegmentResult result = segment_sheet(sheet, min_area, pad, stem);
    if (result.empty_warning) {
      std::cerr << "warning: no ink components found in " << sheet_file.string() << "\n";
      continue;
    }
    const fs::path sheet_out = out_dir / stem;
    fs::create_directories(sheet_out);
    for (const CharCrop& crop : result.crops) {
      save_image(median_denoise(crop.image),
                 sheet_out / (std::to_string(crop.sequence_index) + ".ppm"));
      index << stem << "," << crop.sequence_index << "," << crop.x << "," << crop.y << ","
            << crop.w << "," << crop.h << "\n";
      ++total;
    }
  }
  std::cout << "segmented " << sheets.size() << " sheet(s) into " << total << " crops under "
            << out_dir.string() << "\n";
  return 0;
}

int cmd_augment(const fs::path& data_root, const AugmentSpec& spec, std::uint64_t seed,
                bool strict) {
  const fs::path crops = data_root / "crops";
  const fs::path writers = data_root / "writers.csv";
  Manifest manifest = build_manifest(crops, writers, strict ? 1e-9 : 0.01);
  print_warnings(manifest);
  if (manifest.rows.empty()) {
    throw DataError("no crops to augment under " + crops.string());
  }

  // Only original crops act as augmentation sources, so a rerun overwrites
  // the same variants instead of compounding them.
  std::vector<ManifestRow> sources;
  for (const ManifestRow& row : manifest.rows) {
    const fs::path p(row.image_path);
    const std::string stem = p.stem().string();
    bool is_variant = false;
    for (std::string_view suffix : kAugmentSuffixes) {
      if (!suffix.empty() && stem.ends_with(suffix)) is_variant = true;
    }
    if (!is_variant) sources.push_back(row);
  }

  RngStream base(seed, "augment");
  Manifest augmented;
  augmented.writers = manifest.writers;
  std::size_t written = 0;
  for (const ManifestRow& row : sources) {
    const fs::path file = data_root / row.image_path;
    const Tensor img = normalize(load_image(file));
    const RngStream per_image = base.derive(row.image_path);
    const auto variants = augment_all(img, spec, per_image);
    for (std::size_t v = 0; v < variants.size(); ++v) {
      ManifestRow out_row = row;
      if (v > 0) {
        fs::path out_file = file.parent_path() /
                            (file.stem().string() + std::string(kAugmentSuffixes[v]) + ".ppm");
        save_image(to_image(variants[v]), out_file);
        out_row.image_path = fs::relative(out_file, data_root).generic_string();
        ++written;
      }
      augmented.rows.push_back(std::move(out_row));
    }
  }
  if (augmented.rows.size() != sources.size() * 7 || written != sources.size() * 6) {
    throw DataError("augmentation count mismatch: " + std::to_string(sources.size()) +
                    " sources produced " + std::to_string(augmented.rows.size()) + " rows");
  }
  augmented.save_rows(data_root / "manifest.csv");
  std::cout << "augmented " << sources.size() << " crops into " << augmented.rows.size()
            << " images; manifest: " << (data_root / "manifest.csv").string() << "\n";
  return 0;
}

int cmd_split(const fs::path& manifest_csv, const std::string& writers_flag,
              const std::string& ratios_text, std::uint64_t seed, bool before_augment,
              bool strict) {
  Manifest manifest = load_dataset(manifest_csv, writers_flag, strict);
  assign_splits(manifest, parse_ratios(ratios_text), seed, before_augment);
  print_warnings(manifest);
  manifest.save_rows(manifest_csv);
  std::cout << "split " << manifest.rows.size() << " rows: train " << manifest.count_in(Split::Train)
            << ", val " << manifest.count_in(Split::Val) << ", test "
            << manifest.count_in(Split::Test) << "\n";
  return 0;
}

struct TrainFlags {
  std::string manifest;
  std::string writers;
  std::string config;
  std::string out = "run";
  std::uint64_t seed = kDefaultSeed;
  int batch = 32;
  double lr = 1e-4;
  int epochs = 100;
  int patience = 10;
  int input_size = 0;  // 0 = keep the model config's geometry
  int channels = 0;
  bool strict = false;
};

ModelConfig resolve_model_config(const TrainFlags& flags, std::size_t num_classes) {
  ModelConfig cfg;
  if (!flags.config.empty()) {
    cfg = ModelConfig::load(flags.config);
  } else {
    cfg = table1_presets(static_cast<int>(num_classes))[3];  // "best"
  }
  if (flags.input_size > 0) {
    cfg.height = cfg.width = flags.input_size;
  }
  if (flags.channels > 0) {
    cfg.channels = flags.channels;
  }
  if (cfg.num_classes != static_cast<int>(num_classes)) {
    throw ConfigError("model config declares " + std::to_string(cfg.num_classes) +
                      " classes but the writer table has " + std::to_string(num_classes));
  }
  return cfg;
}

int cmd_train(const TrainFlags& flags) {
  const fs::path manifest_csv(flags.manifest);
  Manifest manifest = load_dataset(manifest_csv, flags.writers, flags.strict);
  print_warnings(manifest);
  if (manifest.count_in(Split::Train) == 0) {
    throw ConfigError("manifest has no train split assignments; run `scriptbmi split` first");
  }

  const ModelConfig model_cfg = resolve_model_config(flags, manifest.writers.size());
  Model model(model_cfg);
  RngStream init_stream(flags.seed, "init");
  model.init_params(init_stream);

  const fs::path base = manifest_csv.parent_path();
  const CropDataset train_set(manifest, Split::Train, base, model_cfg.height, model_cfg.width,
                              model_cfg.channels);
  const CropDataset val_set(manifest, Split::Val, base, model_cfg.height, model_cfg.width,
                            model_cfg.channels);
  const CropDataset test_set(manifest, Split::Test, base, model_cfg.height, model_cfg.width,
                             model_cfg.channels);

  TrainConfig cfg;
  cfg.batch_size = flags.batch;
  cfg.max_epochs = flags.epochs;
  cfg.learning_rate = flags.lr;
  cfg.patience = flags.patience;
  cfg.seed = flags.seed;

  std::cout << "training " << model_cfg.name << " on " << train_set.size() << " images ("
            << steps_per_epoch(train_set.size(), static_cast<std::size_t>(cfg.batch_size))
            << " steps/epoch, lr " << cfg.learning_rate << ", batch " << cfg.batch_size << ")\n";
  const TrainReport report =
      train(model, train_set, val_set, test_set, cfg,
            [](int epoch, double train_loss, double val_loss, double val_acc) {
              std::printf("epoch %d train_loss=%.6f val_loss=%.6f val_acc=%.4f\n", epoch,
                          train_loss, val_loss, val_acc);
            });

  fs::create_directories(flags.out);
  const fs::path out(flags.out);
  save_model(model, out / "weights.bin");
  report.write_loss_csv(out / "loss_curve.csv");
  report.write_loss_svg(out / "loss_curve.svg");
  report.write_metrics_csv(out / "metrics.csv");

  nlohmann::json run_log;
  run_log["model"] = model_cfg.name;
  run_log["seed"] = cfg.seed;
  run_log["learning_rate"] = cfg.learning_rate;
  run_log["batch_size"] = cfg.batch_size;
  run_log["max_epochs"] = cfg.max_epochs;
  run_log["patience"] = cfg.patience;
  run_log["input"] = {model_cfg.channels, model_cfg.height, model_cfg.width};
  run_log["steps_per_epoch"] =
      steps_per_epoch(train_set.size(), static_cast<std::size_t>(cfg.batch_size));
  run_log["stopped_epoch"] = report.stopped_epoch;
  run_log["best_epoch"] = report.best_epoch;
  run_log["wall_seconds"] = report.wall_seconds;
  std::ofstream(out / "run.json") << run_log.dump(2) << "\n";

  std::cout << "stopped at epoch " << report.stopped_epoch << " (best " << report.best_epoch
            << ")\ntest metrics: " << MetricsReport::csv_header() << " = "
            << report.test_metrics.csv_row() << "\nartifacts in " << out.string() << "\n";
  return 0;
}

int cmd_evaluate(const std::string& weights, const std::string& manifest_path,
                 const std::string& writers_flag, const std::string& split_text, int batch,
                 bool strict) {
  Model model = load_model(weights);
  const fs::path manifest_csv(manifest_path);
  Manifest manifest = load_dataset(manifest_csv, writers_flag, strict);
  if (model.num_classes() != manifest.writers.size()) {
    throw ConfigError("weights expect " + std::to_string(model.num_classes()) +
                      " classes but the writer table has " +
                      std::to_string(manifest.writers.size()));
  }
  const Split split = split_from_name(split_text);
  const CropDataset data(manifest, split, manifest_csv.parent_path(), model.config().height,
                         model.config().width, model.config().channels);
  if (data.size() == 0) {
    throw DataError("no rows assigned to split '" + split_text + "'");
  }
  const EvalResult result = evaluate(model, data, batch);
  std::cout << MetricsReport::csv_header() << "\n" << result.metrics.csv_row() << "\n";
  std::cerr << "loss " << result.loss << " over " << data.size() << " images\n";
  return 0;
}

int cmd_predict(const std::string& weights, const std::string& image_path,
                const std::string& writers_csv) {
  Model model = load_model(weights);
  const auto writers = load_writer_table(writers_csv);
  const auto table = class_bmi_table(writers);
  if (model.num_classes() != table.size()) {
    throw ConfigError("weights expect " + std::to_string(model.num_classes()) +
                      " classes but the writer table has " + std::to_string(table.size()));
  }
  Image img = load_image(image_path, model.config().channels == 3);
  img = median_denoise(img);
  img = resize_bilinear(img, model.config().height, model.config().width);
  Tensor x = normalize(img);
  x = x.reshaped({1, x.extent(0), x.extent(1), x.extent(2)});
  const Tensor probs = model.forward(x, nn::Mode::Eval);
  const BmiPrediction prediction = predict_bmi(probs, table);
  std::printf("%d,%.4f,%.6f\n", prediction.class_index, prediction.bmi, prediction.confidence);
  return 0;
}

int cmd_ablate(const TrainFlags& flags, const std::string& out_dir) {
  const fs::path manifest_csv(flags.manifest);
  Manifest manifest = load_dataset(manifest_csv, flags.writers, flags.strict);
  print_warnings(manifest);
  if (manifest.count_in(Split::Train) == 0) {
    throw ConfigError("manifest has no train split assignments; run `scriptbmi split` first");
  }

  const int num_classes = static_cast<int>(manifest.writers.size());
  const int size = flags.input_size > 0 ? flags.input_size : 224;
  const int channels = flags.channels > 0 ? flags.channels : 3;
  std::vector<ModelConfig> configs;
  if (!flags.config.empty()) {
    ModelConfig cfg = ModelConfig::load(flags.config);
    cfg.height = cfg.width = size;
    cfg.channels = channels;
    configs.push_back(std::move(cfg));
  } else {
    configs = table1_presets(num_classes, channels, size, size);
  }

  const fs::path base = manifest_csv.parent_path();
  const CropDataset train_set(manifest, Split::Train, base, size, size, channels);
  const CropDataset val_set(manifest, Split::Val, base, size, size, channels);
  const CropDataset test_set(manifest, Split::Test, base, size, size, channels);

  TrainConfig cfg;
  cfg.batch_size = flags.batch;
  cfg.max_epochs = flags.epochs;
  cfg.learning_rate = flags.lr;
  cfg.patience = flags.patience;
  cfg.seed = flags.seed;

  const AblationResult result = run_ablation(configs, train_set, val_set, test_set, cfg);
  emit_reports(result, out_dir);
  std::cout << "config," << MetricsReport::csv_header() << "\n";
  for (const AblationRow& row : result.rows) {
    if (row.failed) {
      std::cout << row.config_name << ",failed: " << row.error << "\n";
    } else {
      std::cout << row.config_name << "," << row.report.test_metrics.csv_row() << "\n";
    }
  }
  std::cout << "reports in " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"handwritten-character BMI pipeline: segment, augment, split, train, evaluate,"
               " ablate, predict, synth"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic desk-scale corpus");
  std::string synth_out;
  int synth_writers = 8, synth_chars = 26, synth_size = 64;
  std::uint64_t synth_seed = kDefaultSeed;
  synth->add_option("--out", synth_out, "output dataset root")->required();
  synth->add_option("--writers", synth_writers, "number of writers");
  synth->add_option("--chars", synth_chars, "characters per writer (cycles a-z)");
  synth->add_option("--size", synth_size, "square crop size in pixels");
  synth->add_option("--seed", synth_seed, "master seed");

  // segment
  auto* segment = app.add_subcommand("segment", "cut scanned sheets into character crops");
  std::string seg_sheets, seg_out;
  int seg_min_area = 30, seg_pad = 4;
  segment->add_option("--sheets", seg_sheets, "directory of sheet images (.ppm/.pgm)")->required();
  segment->add_option("--out", seg_out, "output directory for crops + index CSV")->required();
  segment->add_option("--min-area", seg_min_area, "discard components below this pixel area");
  segment->add_option("--pad", seg_pad, "padding around each bounding box");

  // augment
  auto* augment = app.add_subcommand("augment", "materialize the six augmentation variants");
  std::string aug_data;
  std::uint64_t aug_seed = kDefaultSeed;
  bool aug_strict = false;
  AugmentSpec aug_spec;
  augment->add_option("--data", aug_data, "dataset root (crops/ + writers.csv)")->required();
  augment->add_option("--seed", aug_seed, "master seed");
  augment->add_option("--brightness", aug_spec.brightness_factor, "brightness factor");
  augment->add_option("--contrast", aug_spec.contrast_factor, "contrast factor");
  augment->add_option("--sharpness", aug_spec.sharpness_amount, "unsharp-mask amount");
  augment->add_option("--noise-sigma", aug_spec.noise_sigma, "gaussian noise sigma");
  augment->add_option("--blur-sigma", aug_spec.blur_sigma, "gaussian blur sigma");
  augment->add_flag("--strict", aug_strict, "exact BMI validation");

  // split
  auto* split = app.add_subcommand("split", "assign stratified train/val/test splits");
  std::string split_manifest, split_writers, split_ratios = "0.7,0.15,0.15";
  std::uint64_t split_seed = kDefaultSeed;
  bool split_before_augment = false, split_strict = false;
  split->add_option("--manifest", split_manifest, "manifest CSV (rewritten in place)")->required();
  split->add_option("--writers", split_writers, "writer table CSV (default: sibling writers.csv)");
  split->add_option("--ratios", split_ratios, "train,val,test ratios");
  split->add_option("--seed", split_seed, "master seed");
  split->add_flag("--split-before-augment", split_before_augment,
                  "keep augmented variants of one crop in the same split");
  split->add_flag("--strict", split_strict, "exact BMI validation");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model on the assigned splits");
  TrainFlags train_flags;
  train_cmd->add_option("--manifest", train_flags.manifest, "manifest CSV with splits")->required();
  train_cmd->add_option("--writers", train_flags.writers, "writer table CSV");
  train_cmd->add_option("--config", train_flags.config, "model config JSON (default: best preset)");
  train_cmd->add_option("--out", train_flags.out, "output directory")->required();
  train_cmd->add_option("--seed", train_flags.seed, "master seed");
  train_cmd->add_option("--batch", train_flags.batch, "batch size");
  train_cmd->add_option("--lr", train_flags.lr, "learning rate");
  train_cmd->add_option("--epochs", train_flags.epochs, "maximum epochs");
  train_cmd->add_option("--patience", train_flags.patience, "early-stop patience");
  std::string train_input_size;
  train_cmd->add_option("--input-size", train_input_size,
                        "square input size override (pixels or 'fig5')");
  train_cmd->add_option("--channels", train_flags.channels, "input channels override");
  train_cmd->add_flag("--strict", train_flags.strict, "exact BMI validation");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "run a saved model over one split");
  std::string eval_weights, eval_manifest, eval_writers, eval_split = "test";
  int eval_batch = 32;
  bool eval_strict = false;
  eval_cmd->add_option("--weights", eval_weights, "weights file")->required();
  eval_cmd->add_option("--manifest", eval_manifest, "manifest CSV with splits")->required();
  eval_cmd->add_option("--writers", eval_writers, "writer table CSV");
  eval_cmd->add_option("--split", eval_split, "train|val|test");
  eval_cmd->add_option("--batch", eval_batch, "batch size");
  eval_cmd->add_flag("--strict", eval_strict, "exact BMI validation");

  // predict
  auto* predict = app.add_subcommand("predict", "predict writer class and BMI for one image");
  std::string pred_weights, pred_image, pred_writers;
  predict->add_option("--weights", pred_weights, "weights file")->required();
  predict->add_option("--image", pred_image, "character image (.ppm/.pgm)")->required();
  predict->add_option("--writers", pred_writers, "writer table CSV")->required();

  // ablate
  auto* ablate = app.add_subcommand("ablate", "train every preset and emit comparison reports");
  TrainFlags ablate_flags;
  std::string ablate_out = "ablation";
  ablate_flags.epochs = 100;
  ablate->add_option("--manifest", ablate_flags.manifest, "manifest CSV with splits")->required();
  ablate->add_option("--writers", ablate_flags.writers, "writer table CSV");
  ablate->add_option("--config", ablate_flags.config, "single model config JSON instead of presets");
  ablate->add_option("--out", ablate_out, "report directory");
  ablate->add_option("--seed", ablate_flags.seed, "master seed");
  ablate->add_option("--batch", ablate_flags.batch, "batch size");
  ablate->add_option("--lr", ablate_flags.lr, "learning rate");
  ablate->add_option("--epochs", ablate_flags.epochs, "maximum epochs");
  ablate->add_option("--patience", ablate_flags.patience, "early-stop patience");
  std::string ablate_input_size;
  ablate->add_option("--input-size", ablate_input_size, "square input size (pixels or 'fig5')");
  ablate->add_option("--channels", ablate_flags.channels, "input channels");
  ablate->add_flag("--strict", ablate_flags.strict, "exact BMI validation");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      return cmd_synth(synth_out, synth_writers, synth_chars, synth_size, synth_seed);
    }
    if (segment->parsed()) {
      return cmd_segment(seg_sheets, seg_out, seg_min_area, seg_pad);
    }
    if (augment->parsed()) {
      return cmd_augment(aug_data, aug_spec, aug_seed, aug_strict);
    }
    if (split->parsed()) {
      return cmd_split(split_manifest, split_writers, split_ratios, split_seed,
                       split_before_augment, split_strict);
    }
    if (train_cmd->parsed()) {
      train_flags.input_size = parse_input_size(train_input_size);
      return cmd_train(train_flags);
    }
    if (eval_cmd->parsed()) {
      return cmd_evaluate(eval_weights, eval_manifest, eval_writers, eval_split, eval_batch,
                          eval_strict);
    }
    if (predict->parsed()) {
      return cmd_predict(pred_weights, pred_image, pred_writers);
    }
    if (ablate->parsed()) {
      ablate_flags.input_size = parse_input_size(ablate_input_size);
      return cmd_ablate(ablate_flags, ablate_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
