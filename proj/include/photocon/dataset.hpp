#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "photocon/image.hpp"

namespace photocon {

/// Aligned images of one scene under different illuminations.
struct SceneSet {
  std::string scene_id;
  std::vector<ImageTensor> instances;
  // Either empty or one mask per instance.
  std::vector<Mask> masks;

  void validate() const;
  bool has_masks() const noexcept { return !masks.empty(); }
};

struct Shift {
  int dx = 0;
  int dy = 0;
  bool operator==(const Shift&) const = default;
};

struct PatchTriplet {
  ImageTensor anchor;
  ImageTensor positive;
  ImageTensor negative;
  std::string scene_id;
  BoundingBox anchor_box;
  Shift shift;
};

/// Synthetic relighting parameters: out = clamp(base^gamma * gain_c * shading(x,y), 0, 1).
struct IlluminationParams {
  std::array<double, 3> gain{1.0, 1.0, 1.0};
  double gamma = 1.0;
  // Seed for the smooth shading field; nullopt means shading == 1 everywhere.
  std::optional<std::uint64_t> shading_seed;

  void validate() const;
};

/// Draws gains in [0.4, 1.6], gamma in [0.6, 1.6] and a shading seed.
IlluminationParams draw_illumination(std::uint64_t seed);

/// Smooth multiplicative field in [0.3, 1.0]: three separable cosine modes
/// plus a linear ramp, renormalized.
std::vector<float> shading_field(int height, int width, std::uint64_t seed);

ImageTensor synth_relight(const ImageTensor& base, const IlluminationParams& params);

/// Scene of `variants` relit copies of `base`; variant k uses
/// draw_illumination(derive_seed(seed, k)).
SceneSet synth_scene(const ImageTensor& base, const std::string& scene_id, int variants, std::uint64_t seed);

/// Procedural "photo" with piecewise-smooth regions, edges and textures.
/// Stands in for base photographs when none are available.
ImageTensor procedural_base_image(int height, int width, std::uint64_t seed);

/// Reads `root/<scene>/*.png` (and optional `root/<scene>/masks/<same name>`).
std::vector<SceneSet> ingest_scene_dir(const std::filesystem::path& root);

/// Grayscale mask image thresholded at 0.5.
Mask mask_from_image(const ImageTensor& img);

/// Writes root/<scene_id>/<k>.png (k zero-padded to 2 digits) plus
/// root/<scene_id>/masks/ when the scene has masks. Mirrors ingest_scene_dir.
void write_scene_dir(const std::vector<SceneSet>& scenes, const std::filesystem::path& root);

struct SamplingConfig {
  double sigma_p = 25.0;
  int shift_px = 8;
  int patch = 64;
  int max_attempts = 1000;
};

std::vector<PatchTriplet> sample_triplets(const SceneSet& scene, int count, const SamplingConfig& cfg,
                                          std::uint64_t seed);

/// In-memory triplet archive; patches stored planar (C x H x W).
struct TripletArchive {
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t patch_side = 64;
  std::uint32_t channels = 3;
  std::vector<PatchTriplet> triplets;

  void write(const std::filesystem::path& path) const;
  static TripletArchive read(const std::filesystem::path& path);
};

/// Samples `triplets_per_pair * C(n, 2)` triplets per scene (n = instance count).
TripletArchive build_training_set(const std::vector<SceneSet>& scenes, int triplets_per_pair,
                                  const SamplingConfig& cfg, std::uint64_t seed);

}  // namespace photocon
