#include "scriptbmi/ablation.hpp"

#include <fstream>

namespace scriptbmi {

namespace fs = std::filesystem;

AblationResult run_ablation(const std::vector<ModelConfig>& configs, const Dataset& train_split,
                            const Dataset& val_split, const Dataset& test_split,
                            const TrainConfig& cfg) {
  AblationResult result;
  for (const ModelConfig& config : configs) {
    AblationRow row;
    row.config_name = config.name;
    try {
      Model model(config);
      RngStream init_stream(cfg.seed, "init");
      model.init_params(init_stream);
      row.report = train(model, train_split, val_split, test_split, cfg);
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
    result.rows.push_back(std::move(row));
  }
  return result;
}

void emit_reports(const AblationResult& result, const fs::path& out_dir) {
  if (result.rows.empty()) {
    throw DataError("emit_reports needs at least one ablation row");
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    throw IoError("cannot create report directory " + out_dir.string() + ": " + ec.message());
  }

  std::ofstream csv(out_dir / "ablation.csv");
  std::ofstream md(out_dir / "ablation.md");
  if (!csv || !md) {
    throw IoError("cannot write ablation reports under " + out_dir.string());
  }
  csv << "config,accuracy,precision,recall,f1\n";
  md << "| Config | Accuracy (%) | Precision (%) | Recall (%) | F1-score (%) |\n";
  md << "|---|---|---|---|---|\n";
  for (const AblationRow& row : result.rows) {
    if (row.failed) {
      csv << row.config_name << ",,,,\n";
      md << "| " << row.config_name << " | failed: " << row.error << " | | | |\n";
      continue;
    }
    const MetricsReport& m = row.report.test_metrics;
    const std::string cells = m.csv_row();
    csv << row.config_name << "," << cells << "\n";
    md << "| " << row.config_name << " | ";
    for (std::size_t i = 0, start = 0; i <= cells.size(); ++i) {
      if (i == cells.size() || cells[i] == ',') {
        md << cells.substr(start, i - start) << " | ";
        start = i + 1;
      }
    }
    md << "\n";

    const fs::path run_dir = out_dir / row.config_name;
    fs::create_directories(run_dir);
    row.report.write_loss_csv(run_dir / "loss_curve.csv");
    row.report.write_loss_svg(run_dir / "loss_curve.svg");
  }
}

}  // namespace scriptbmi
