#include "photocon/invariance.hpp"

#include <algorithm>

#include "photocon/error.hpp"
#include "photocon/inference.hpp"
#include "photocon/parallel.hpp"
#include "photocon/random.hpp"

namespace photocon {

namespace {

double median(std::vector<double> v) {
  if (v.empty()) throw DataError("median of an empty sample");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

double patch_distance(const ImageTensor& a, const ImageTensor& b, const BoundingBox& box) {
  const ImageTensor pa = crop(a, box), pb = crop(b, box);
  return d_corr(pa.data(), pb.data());
}

InvarianceStats stats(const std::vector<double>& same, const std::vector<double>& cross) {
  InvarianceStats s{median(same), median(cross), 0.0};
  s.ratio = s.cross > 0.0 ? s.epsilon_hat / s.cross : 0.0;
  return s;
}

}  // namespace

InvarianceReport invariance_report(const std::vector<SceneSet>& scenes, const ModelWeights* weights,
                                   const InvarianceConfig& config) {
  if (scenes.size() < 2) throw DataError("invariance report needs at least two scenes");
  if (config.patch < 1 || config.samples_per_scene < 1 || config.max_attempts < 1)
    throw UsageError("invariance report needs patch, samples_per_scene and max_attempts >= 1");
  for (const auto& s : scenes) {
    s.validate();
    if (s.instances.size() < 2) throw DataError("scene '" + s.scene_id + "' needs at least two instances");
  }
  const int ns = static_cast<int>(scenes.size());
  InvarianceReport rep;
  rep.config = config;

  // Boxes: sampled on the reference instance, inside both this scene and the next.
  for (int i = 0; i < ns; ++i) {
    const ImageTensor& a = scenes[i].instances[0];
    const ImageTensor& b = scenes[(i + 1) % ns].instances[0];
    const int h = std::min(a.height(), b.height()), w = std::min(a.width(), b.width());
    if (config.patch > h || config.patch > w)
      throw GeometryError("patch " + std::to_string(config.patch) + " does not fit scene '" + scenes[i].scene_id + "'");
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(i)));
    for (int k = 0; k < config.samples_per_scene; ++k) {
      int attempt = 0;
      for (;; ++attempt) {
        if (attempt == config.max_attempts)
          throw SamplingExhausted("no patch with sigma >= " + std::to_string(config.sigma_min) + " in scene '" +
                                      scenes[i].scene_id + "'",
                                  attempt);
        const BoundingBox box{uniform_int(rng, 0, w - config.patch), uniform_int(rng, 0, h - config.patch), config.patch};
        if (stddev(crop(a, box)) >= config.sigma_min) {
          rep.samples.push_back({scenes[i].scene_id, scenes[(i + 1) % ns].scene_id, box});
          break;
        }
      }
    }
  }

  // 8-bit representations of instances 0 and 1 of every scene.
  auto fill = [&](bool transformed) {
    std::vector<ImageTensor> r0(ns), r1(ns);
    parallel_for(ns, config.threads, [&](int i) {
      auto rep8 = [&](const ImageTensor& img) {
        return transformed ? normalize_to_8bit(forward(*weights, img)).image : quantize_image(img);
      };
      r0[i] = rep8(scenes[i].instances[0]);
      r1[i] = rep8(scenes[i].instances[1]);
    });
    std::vector<double> same, cross;
    for (std::size_t j = 0; j < rep.samples.size(); ++j) {
      auto& smp = rep.samples[j];
      const int i = static_cast<int>(j) / config.samples_per_scene;
      const double ds = patch_distance(r0[i], r1[i], smp.box);
      const double dc = patch_distance(r0[i], r0[(i + 1) % ns], smp.box);
      (transformed ? smp.same_transformed : smp.same_raw) = ds;
      (transformed ? smp.cross_transformed : smp.cross_raw) = dc;
      same.push_back(ds);
      cross.push_back(dc);
    }
    return stats(same, cross);
  };
  rep.raw = fill(false);
  if (weights) rep.transformed = fill(true);
  return rep;
}

CropCommutationReport crop_commutation_report(const TransformFn& transform, const std::vector<ImageTensor>& images,
                                              const CropCommutationConfig& config) {
  const int s = config.crop_side, b = config.border;
  if (config.crops_per_image < 1 || s < 64 || b < 0 || s <= 2 * b)
    throw GeometryError("crop commutation needs crops >= 64 px with an interior left after the border band");
  if (images.empty()) throw DataError("crop commutation needs at least one image");
  CropCommutationReport rep;
  rep.config = config;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const ImageTensor& img = images[i];
    if (img.height() < s + 2 * b || img.width() < s + 2 * b)
      throw GeometryError("image " + std::to_string(i) + " is too small for " + std::to_string(s) + " px crops " +
                          std::to_string(b) + " px from the border");
    const ImageTensor full = transform(img);
    Rng rng(derive_seed(config.seed, i));
    double sum = 0.0;
    for (int k = 0; k < config.crops_per_image; ++k) {
      const BoundingBox box{uniform_int(rng, b, img.width() - b - s), uniform_int(rng, b, img.height() - b - s), s};
      const ImageTensor a = crop_rect(crop(full, box), b, b, s - 2 * b, s - 2 * b);
      const ImageTensor c = crop_rect(transform(crop(img, box)), b, b, s - 2 * b, s - 2 * b);
      sum += d_corr(a.data(), c.data());
    }
    rep.per_image.push_back(sum / config.crops_per_image);
  }
  double total = 0.0;
  for (double v : rep.per_image) total += v;
  rep.mean = total / static_cast<double>(rep.per_image.size());
  return rep;
}

CropCommutationReport crop_commutation_report(const ModelWeights& weights, const std::vector<ImageTensor>& images,
                                              const CropCommutationConfig& config) {
  return crop_commutation_report([&](const ImageTensor& x) { return forward(weights, x); }, images, config);
}

}  // namespace photocon
