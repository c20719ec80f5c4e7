#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "photocon/dataset.hpp"
#include "photocon/image.hpp"
#include "photocon/network.hpp"

namespace photocon {

enum class MatchMethod { kNaive, kFft };

/// Score map over template positions; entry (v, u) is the window with top-left (u, v).
struct Heatmap {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  double at(int y, int x) const noexcept { return values[static_cast<std::size_t>(y) * width + x]; }
};

struct MatchResult {
  BoundingBox best_box;
  double score = 0.0;
  Heatmap heatmap;
};

/// Zero-mean normalized cross-correlation, pooled over all channels.
/// Windows (or templates) without variance score 0. Ties resolve to the
/// first maximum in row-major order.
MatchResult ncc_match(const ImageTensor& target, const ImageTensor& templ, MatchMethod method = MatchMethod::kFft);

/// First row-major argmax.
BoundingBox heatmap_argmax(const Heatmap& map, int side, double* score = nullptr);

struct RocCurve {
  std::vector<double> thresholds;  // 0, step, ..., 1
  std::vector<double> success;     // fraction with IoU >= threshold
  double auc = 0.0;                // trapezoid rule over thresholds
};

RocCurve auc_from_ious(const std::vector<double>& ious, double step = 0.01);

struct MatchTrial {
  std::string scene;
  int patch_size = 0;
  BoundingBox truth;
  BoundingBox predicted;
  double score = 0.0;
  double iou = 0.0;
};

struct MatchSizeSummary {
  int patch_size = 0;
  int trials = 0;
  int skipped = 0;  // trials lost to sampling exhaustion
  RocCurve roc;
};

struct MatchBenchConfig {
  std::vector<int> patch_sizes{32, 64, 128};
  int patches_per_scene = 10;
  double sigma_min = 25.0;
  int max_attempts = 1000;
  std::uint64_t seed = 0;
  MatchMethod method = MatchMethod::kFft;
  int threads = 1;
};

struct MatchBenchReport {
  MatchBenchConfig config;
  bool transformed = false;
  std::vector<MatchTrial> trials;        // scene-major, then size, then patch
  std::vector<MatchSizeSummary> sizes;   // one per configured patch size
  RocCurve overall;                      // over all trials
  int skipped = 0;
};

/// Matches templates cut from each scene's first instance against its second.
/// Both images pass through `weights` and normalize_to_8bit when given, or
/// are quantized to 8 bits as stored otherwise. Template boxes are drawn on
/// the untransformed reference, so raw and transformed runs share them.
MatchBenchReport run_match_benchmark(const std::vector<SceneSet>& scenes, const ModelWeights* weights,
                                     const MatchBenchConfig& config);

/// Heatmap as a gray image, -1 -> black, 1 -> white.
ImageTensor heatmap_image(const Heatmap& map);

}  // namespace photocon
