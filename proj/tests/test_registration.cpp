#include <catch_amalgamated.hpp>

#include <cmath>

#include "photocon/dataset.hpp"
#include "photocon/error.hpp"
#include "photocon/random.hpp"
#include "photocon/registration.hpp"
#include "support.hpp"

using namespace photocon;
using Catch::Approx;

namespace {

AffineWarp random_warp(Rng& rng) {
  AffineWarp w;
  for (auto& v : w.m) v = uniform(rng, -2, 2);
  w.m[0] += 3;
  w.m[4] += 3;
  return w;
}

void check_near(const AffineWarp& a, const AffineWarp& b, double tol) {
  for (int i = 0; i < 6; ++i) CHECK(a.m[i] == Approx(b.m[i]).margin(tol));
}

}  // namespace

TEST_CASE("compose and invert", "[registration]") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = random_warp(rng), b = random_warp(rng), c = random_warp(rng);
    check_near(compose(a, invert(a)), AffineWarp{}, 1e-9);
    check_near(compose(invert(a), a), AffineWarp{}, 1e-9);
    check_near(compose(compose(a, b), c), compose(a, compose(b, c)), 1e-9);
    check_near(invert(compose(a, b)), compose(invert(b), invert(a)), 1e-9);
    // compose(a, b) applies b first.
    const double x = uniform(rng, -5, 5), y = uniform(rng, -5, 5);
    double bx, by, abx, aby, ox, oy;
    b.apply(x, y, bx, by);
    a.apply(bx, by, abx, aby);
    compose(a, b).apply(x, y, ox, oy);
    CHECK(ox == Approx(abx).margin(1e-9));
    CHECK(oy == Approx(aby).margin(1e-9));
  }
  CHECK_THROWS_AS(invert(AffineWarp{{1, 2, 0, 2, 4, 0}}), GeometryError);
  CHECK_THROWS_AS(invert(AffineWarp{{0, 0, 1, 0, 0, 1}}), GeometryError);
}

TEST_CASE("rotation about the center", "[registration]") {
  const auto r = rotation_about_center(33.0, 20, 30);
  double x, y;
  r.apply(14.5, 9.5, x, y);
  CHECK(x == Approx(14.5).margin(1e-12));
  CHECK(y == Approx(9.5).margin(1e-12));
  CHECK(r.det() == Approx(1.0));
  check_near(compose(rotation_about_center(10, 20, 30), rotation_about_center(23, 20, 30)), r, 1e-12);
  const auto q = rotation_about_center(90, 9, 9);
  CHECK(q.m == std::array<double, 6>{0, 1, 0, -1, 0, 8});
  const auto t = rotation_about_center(0, 9, 9, 2.5, -1);
  CHECK(t.tx() == 2.5);
  CHECK(t.ty() == -1);
}

TEST_CASE("warp_image examples", "[registration]") {
  const auto img = testsupport::random_image(9, 9, 3, 2);
  const auto id = warp_image(img, AffineWarp{}, 9, 9);
  CHECK(id.image == img);
  for (auto b : id.valid.bits) CHECK(b == 1);

  // A counter-clockwise quarter turn of a square image is a pure permutation.
  CHECK(warp_image(img, rotation_about_center(90, 9, 9), 9, 9).image == rotate90(img, 1));
  CHECK(warp_image(img, rotation_about_center(-90, 9, 9), 9, 9).image == rotate90(img, 3));

  const auto shifted = warp_image(img, AffineWarp{{1, 0, 2, 0, 1, 0}}, 9, 9);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x) {
      CHECK(shifted.valid.at(y, x) == (x >= 2));
      if (x >= 2) CHECK(shifted.image.at(y, x, 1) == img.at(y, x - 2, 1));
      else CHECK(shifted.image.at(y, x, 1) == 0.0f);
    }
  const auto half = warp_image(img, AffineWarp{{1, 0, 0, 0, 1, 0.5}}, 9, 9);
  CHECK(half.image.at(4, 4, 0) == Approx(0.5 * (img.at(3, 4, 0) + img.at(4, 4, 0))).margin(1e-6));
  CHECK_FALSE(half.valid.at(0, 4));

  // Input mask: a hole spreads to every output pixel that samples it.
  Mask m{9, 9, std::vector<unsigned char>(81, 1)};
  m.bits[4 * 9 + 4] = 0;
  const auto masked = warp_image(img, AffineWarp{{1, 0, 0, 0, 1, 0.5}}, 9, 9, &m);
  CHECK_FALSE(masked.valid.at(4, 4));
  CHECK_FALSE(masked.valid.at(5, 4));
  CHECK(masked.valid.at(6, 4));
  CHECK(masked.valid.at(4, 5));
  CHECK(warp_image(img, AffineWarp{}, 9, 9, &m).image.at(4, 4, 0) == 0.0f);
  CHECK_THROWS_AS(warp_image(img, AffineWarp{{0, 0, 0, 0, 0, 0}}, 9, 9), GeometryError);
}

TEST_CASE("ECC recovers a known warp", "[registration]") {
  const auto ref = procedural_base_image(128, 128, 9);
  const std::vector<AffineWarp> cases = {rotation_about_center(4, 128, 128, 2.0, -1.5),
                                         rotation_about_center(-9, 128, 128, -3.0, 1.0),
                                         AffineWarp{{1.03, 0.02, 1.2, -0.01, 0.98, 0.7}}};
  for (const auto& t : cases) {
    const auto moved = warp_image(ref, t, 128, 128);
    // Brightness change the coefficient ignores.
    ImageTensor moving = moved.image;
    for (auto& v : moving.data()) v = 0.7f * v + 0.1f;
    const auto e = ecc_align(ref, moving, {}, &moved.valid);
    const auto expect = invert(t);
    for (int i : {0, 1, 3, 4}) CHECK(e.warp.m[i] == Approx(expect.m[i]).margin(2e-3));
    // Compare displacements at the image corners in pixels.
    for (double x : {0.0, 127.0})
      for (double y : {0.0, 127.0}) {
        double ax, ay, bx, by;
        e.warp.apply(x, y, ax, ay);
        expect.apply(x, y, bx, by);
        CHECK(std::hypot(ax - bx, ay - by) < 0.1);
      }
    CHECK(e.coefficient > 0.95);
    CHECK(e.iterations > 0);
  }
}

TEST_CASE("ECC on identical images stays at the identity", "[registration]") {
  const auto img = procedural_base_image(64, 64, 4);
  const auto e = ecc_align(img, img);
  check_near(e.warp, AffineWarp{}, 1e-4);
  CHECK(e.coefficient == Approx(1).margin(1e-6));
}

TEST_CASE("ECC input checks", "[registration]") {
  const auto img = procedural_base_image(64, 64, 5);
  CHECK_THROWS_AS(ecc_align(img, ImageTensor(20, 64, 3)), GeometryError);
  EccConfig bad;
  bad.max_iterations = 0;
  CHECK_THROWS_AS(ecc_align(img, img, bad), UsageError);
  Mask small{10, 10, std::vector<unsigned char>(100, 1)};
  CHECK_THROWS_AS(ecc_align(img, img, {}, &small), GeometryError);
  // A flat image offers no gradient to follow.
  CHECK_THROWS_AS(ecc_align(img, ImageTensor(64, 64, 3, 0.5f)), NumericError);
}

TEST_CASE("registration benchmark", "[registration]") {
  std::vector<SceneSet> scenes;
  for (int i = 0; i < 2; ++i)
    scenes.push_back(synth_scene(procedural_base_image(96, 96, 30 + i), "r" + std::to_string(i), 2, 40 + i));
  RegistrationBenchConfig cfg;
  cfg.angles = {2.0, 10.0};
  cfg.seed = 3;
  const auto rep = run_registration_benchmark(scenes, nullptr, cfg);
  REQUIRE(rep.trials.size() == 4);
  REQUIRE(rep.angles.size() == 2);
  CHECK(rep.trials[1].scene == "r0");
  CHECK(rep.trials[1].angle == 10.0);
  for (const auto& t : rep.trials) {
    double x, y;
    t.applied.apply(47.5, 47.5, x, y);
    CHECK(std::hypot(x - 47.5, y - 47.5) <= 5.0 + 1e-9);
  }
  cfg.threads = 2;
  const auto again = run_registration_benchmark(scenes, nullptr, cfg);
  for (std::size_t i = 0; i < rep.trials.size(); ++i) {
    CHECK(again.trials[i].estimate == rep.trials[i].estimate);
    CHECK(again.trials[i].psnr == rep.trials[i].psnr);
  }

  // Same illumination on both sides: ECC reaches the interpolation baseline.
  auto same = scenes;
  for (auto& s : same) s.instances[1] = s.instances[0];
  const auto easy = run_registration_benchmark(same, nullptr, cfg);
  for (const auto& t : easy.trials) {
    REQUIRE_FALSE(t.failed);
    CHECK(t.psnr > t.psnr_truth - 3.0);
    CHECK(t.psnr > 30.0);
  }
  for (const auto& a : easy.angles) {
    CHECK(a.failures == 0);
    CHECK(a.trials == 2);
  }
  cfg.angles.clear();
  CHECK_THROWS_AS(run_registration_benchmark(scenes, nullptr, cfg), UsageError);
}
