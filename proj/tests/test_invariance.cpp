#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "photocon/error.hpp"
#include "photocon/inference.hpp"
#include "photocon/invariance.hpp"
#include "support.hpp"

using namespace photocon;
using Catch::Approx;

namespace {

std::vector<SceneSet> scenes_for_test(int n, int size = 96) {
  std::vector<SceneSet> s;
  for (int i = 0; i < n; ++i)
    s.push_back(synth_scene(procedural_base_image(size, size, 200 + i), "v" + std::to_string(i), 2, 300 + i));
  return s;
}

double ref_median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double ref_distance(const ImageTensor& a, const ImageTensor& b, const BoundingBox& box) {
  double ab = 0, aa = 0, bb = 0;
  for (int y = box.y; y < box.y + box.side; ++y)
    for (int x = box.x; x < box.x + box.side; ++x)
      for (int c = 0; c < a.channels(); ++c) {
        const double p = a.at(y, x, c), q = b.at(y, x, c);
        ab += p * q;
        aa += p * p;
        bb += q * q;
      }
  return 1.0 - ab / ((std::sqrt(aa) + 1e-8) * (std::sqrt(bb) + 1e-8));
}

}  // namespace

TEST_CASE("invariance report matches a direct recomputation", "[invariance]") {
  const auto scenes = scenes_for_test(3);
  InvarianceConfig cfg;
  cfg.patch = 24;
  cfg.samples_per_scene = 5;
  cfg.sigma_min = 10;
  cfg.seed = 4;
  const auto rep = invariance_report(scenes, nullptr, cfg);
  REQUIRE(rep.samples.size() == 15);
  CHECK_FALSE(rep.transformed);
  std::vector<double> same, cross;
  for (std::size_t j = 0; j < rep.samples.size(); ++j) {
    const auto& s = rep.samples[j];
    const int i = static_cast<int>(j) / 5;
    CHECK(s.scene == scenes[i].scene_id);
    CHECK(s.other_scene == scenes[(i + 1) % 3].scene_id);
    CHECK(stddev(crop(scenes[i].instances[0], s.box)) >= 10);
    const auto q0 = quantize_image(scenes[i].instances[0]), q1 = quantize_image(scenes[i].instances[1]);
    const auto qn = quantize_image(scenes[(i + 1) % 3].instances[0]);
    CHECK(s.same_raw == Approx(ref_distance(q0, q1, s.box)).margin(1e-6));
    CHECK(s.cross_raw == Approx(ref_distance(q0, qn, s.box)).margin(1e-6));
    same.push_back(s.same_raw);
    cross.push_back(s.cross_raw);
  }
  CHECK(rep.raw.epsilon_hat == Approx(ref_median(same)).margin(1e-12));
  CHECK(rep.raw.cross == Approx(ref_median(cross)).margin(1e-12));
  CHECK(rep.raw.ratio == Approx(rep.raw.epsilon_hat / rep.raw.cross));

  // Even sample count: median averages the middle pair.
  cfg.samples_per_scene = 4;
  const auto even = invariance_report(scenes, nullptr, cfg);
  std::vector<double> es;
  for (const auto& s : even.samples) es.push_back(s.same_raw);
  CHECK(even.raw.epsilon_hat == Approx(ref_median(es)).margin(1e-12));
}

TEST_CASE("invariance report with a transform", "[invariance]") {
  const auto scenes = scenes_for_test(2);
  NetworkConfig nc;
  nc.levels = 2;
  nc.base_width = 6;
  const auto w = init_weights(nc, 3, 3);
  InvarianceConfig cfg;
  cfg.patch = 32;
  cfg.samples_per_scene = 3;
  cfg.sigma_min = 10;
  const auto a = invariance_report(scenes, &w, cfg);
  REQUIRE(a.transformed);
  const auto raw = invariance_report(scenes, nullptr, cfg);
  CHECK(raw.raw.epsilon_hat == a.raw.epsilon_hat);
  const auto r0 = normalize_to_8bit(forward(w, scenes[0].instances[0])).image;
  const auto r1 = normalize_to_8bit(forward(w, scenes[0].instances[1])).image;
  CHECK(a.samples[0].same_transformed == Approx(ref_distance(r0, r1, a.samples[0].box)).margin(1e-6));
  cfg.threads = 2;
  const auto b = invariance_report(scenes, &w, cfg);
  CHECK(b.transformed->epsilon_hat == a.transformed->epsilon_hat);

  // Identical instances give zero same-scene distance.
  auto same = scenes;
  for (auto& s : same) s.instances[1] = s.instances[0];
  const auto z = invariance_report(same, &w, cfg);
  CHECK(z.raw.epsilon_hat == Approx(0).margin(1e-6));
  CHECK(z.transformed->epsilon_hat == Approx(0).margin(1e-6));
}

TEST_CASE("invariance report errors", "[invariance]") {
  const auto scenes = scenes_for_test(2, 64);
  InvarianceConfig cfg;
  cfg.patch = 16;
  CHECK_THROWS_AS(invariance_report({scenes[0]}, nullptr, cfg), DataError);
  cfg.patch = 65;
  CHECK_THROWS_AS(invariance_report(scenes, nullptr, cfg), GeometryError);
  cfg.patch = 16;
  cfg.sigma_min = 200;
  cfg.max_attempts = 20;
  try {
    invariance_report(scenes, nullptr, cfg);
    FAIL("expected SamplingExhausted");
  } catch (const SamplingExhausted& e) {
    CHECK(std::string(e.what()).find("v0") != std::string::npos);
  }
}

TEST_CASE("crop commutation", "[invariance]") {
  std::vector<ImageTensor> imgs{testsupport::textured_image(120, 110, 3, 1), testsupport::textured_image(100, 100, 3, 2)};
  CropCommutationConfig cfg;
  cfg.crops_per_image = 5;
  const TransformFn id = [](const ImageTensor& t) { return t; };
  const auto r = crop_commutation_report(id, imgs, cfg);
  REQUIRE(r.per_image.size() == 2);
  CHECK(r.mean == Approx(0).margin(1e-6));
  // Pointwise maps commute with cropping.
  const TransformFn sq = [](const ImageTensor& t) {
    ImageTensor o = t;
    for (auto& v : o.data()) v = v * v - 0.3f;
    return o;
  };
  CHECK(crop_commutation_report(sq, imgs, cfg).mean == Approx(0).margin(1e-6));
  // A map that sees absolute position does not.
  const TransformFn pos = [](const ImageTensor& t) {
    ImageTensor o = t;
    for (int y = 0; y < t.height(); ++y)
      for (int x = 0; x < t.width(); ++x) o.at(y, x, 0) = static_cast<float>(x) - 20.0f;
    return o;
  };
  const auto p = crop_commutation_report(pos, imgs, cfg);
  CHECK(p.mean > 0.05);
  CHECK(p.mean == Approx((p.per_image[0] + p.per_image[1]) / 2));

  cfg.crop_side = 32;
  CHECK_THROWS_AS(crop_commutation_report(id, imgs, cfg), GeometryError);
  cfg.crop_side = 90;
  CHECK_THROWS_AS(crop_commutation_report(id, imgs, cfg), GeometryError);
  cfg.crop_side = 64;
  CHECK_THROWS_AS(crop_commutation_report(id, {}, cfg), DataError);
}
