#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "scriptbmi/model.hpp"
#include "scriptbmi/train.hpp"

namespace scriptbmi {

struct AblationRow {
  std::string config_name;
  bool failed = false;
  std::string error;
  TrainReport report;
};

struct AblationResult {
  std::vector<AblationRow> rows;  // one per config, in input order
};

// Trains every config against the same splits with the same seed. A
// diverging config is recorded in its row and the run continues.
AblationResult run_ablation(const std::vector<ModelConfig>& configs, const Dataset& train_split,
                            const Dataset& val_split, const Dataset& test_split,
                            const TrainConfig& cfg);

// ablation.csv + ablation.md plus per-config loss_curve.csv / loss_curve.svg
// under <out_dir>/<config_name>/.
void emit_reports(const AblationResult& result, const std::filesystem::path& out_dir);

}  // namespace scriptbmi
