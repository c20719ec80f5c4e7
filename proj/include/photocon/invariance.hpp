#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "photocon/dataset.hpp"
#include "photocon/losses.hpp"
#include "photocon/network.hpp"

namespace photocon {

struct InvarianceConfig {
  int patch = 64;
  int samples_per_scene = 50;
  double sigma_min = 25.0;  // on the reference patch of the raw image
  int max_attempts = 1000;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct InvarianceSample {
  std::string scene;
  std::string other_scene;
  BoundingBox box;
  double same_raw = 0.0;   // d_corr(scene inst 0, scene inst 1) at box
  double cross_raw = 0.0;  // d_corr(scene inst 0, next scene inst 0) at box
  double same_transformed = 0.0;
  double cross_transformed = 0.0;
};

struct InvarianceStats {
  double epsilon_hat = 0.0;  // median same-scene same-location distance
  double cross = 0.0;        // median cross-scene distance
  double ratio = 0.0;        // epsilon_hat / cross
};

struct InvarianceReport {
  InvarianceConfig config;
  std::vector<InvarianceSample> samples;
  InvarianceStats raw;
  std::optional<InvarianceStats> transformed;
};

/// Distances are d_corr between patches of 8-bit representations: the image
/// as stored for the raw side, normalize_to_8bit(F(image)) for the transform.
/// Cross-scene pairs use the same box in the next scene (cyclically).
InvarianceReport invariance_report(const std::vector<SceneSet>& scenes, const ModelWeights* weights,
                                   const InvarianceConfig& config);

struct CropCommutationConfig {
  int crops_per_image = 20;
  int crop_side = 64;
  int border = 16;  // crop distance from the image edge, and band excluded inside the crop
  std::uint64_t seed = 0;
};

struct CropCommutationReport {
  CropCommutationConfig config;
  std::vector<double> per_image;  // mean d_corr per image
  double mean = 0.0;
};

/// Mean d_corr between crop(F(img)) and F(crop(img)) over the crop's
/// interior (the `border` band removed), on raw representations.
CropCommutationReport crop_commutation_report(const TransformFn& transform, const std::vector<ImageTensor>& images,
                                              const CropCommutationConfig& config);
CropCommutationReport crop_commutation_report(const ModelWeights& weights, const std::vector<ImageTensor>& images,
                                              const CropCommutationConfig& config);

}  // namespace photocon
