#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "photocon/config.hpp"
#include "photocon/dataset.hpp"
#include "photocon/matcher.hpp"
#include "photocon/registration.hpp"
#include "photocon/trainer.hpp"

namespace photocon {

/// One grid cell: a name plus config keys overriding the base config.
struct AblationCell {
  std::string name;
  ConfigMap overrides;
};

/// One cell per line: `name key=value key=value ...`; `#` starts a comment.
std::vector<AblationCell> parse_ablation_grid(std::string_view text, const std::string& origin = "<grid>");

/// K = 1..5, each loss term switched off in turn, and the rotation loss on.
std::vector<AblationCell> default_ablation_grid();

struct AblationRow {
  AblationCell cell;
  TrainConfig train;
  MatchBenchReport match;
  LossBreakdown final_loss;  // last training step
};

struct AblationReport {
  std::vector<AblationRow> rows;
};

/// Trains one network per cell into out_dir/<name> and evaluates it with the
/// match benchmark on `scenes`.
AblationReport run_ablation(const TripletArchive& archive, const ConfigMap& base, const std::vector<AblationCell>& grid,
                            const std::vector<SceneSet>& scenes, const MatchBenchConfig& match,
                            const std::filesystem::path& out_dir, int threads);

/// cell,auc_<size>...,auc_all
std::string ablation_csv(const AblationReport& r);

}  // namespace photocon
