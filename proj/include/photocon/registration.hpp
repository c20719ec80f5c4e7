#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "photocon/dataset.hpp"
#include "photocon/image.hpp"
#include "photocon/network.hpp"

namespace photocon {

/// [a b tx; c d ty]: (x, y) -> (a x + b y + tx, c x + d y + ty).
/// Pixel centers sit at integer coordinates, x along columns.
struct AffineWarp {
  std::array<double, 6> m{1.0, 0.0, 0.0, 0.0, 1.0, 0.0};

  double a() const noexcept { return m[0]; }
  double b() const noexcept { return m[1]; }
  double tx() const noexcept { return m[2]; }
  double c() const noexcept { return m[3]; }
  double d() const noexcept { return m[4]; }
  double ty() const noexcept { return m[5]; }
  double det() const noexcept { return m[0] * m[4] - m[1] * m[3]; }
  bool is_identity() const noexcept { return *this == AffineWarp{}; }
  void apply(double x, double y, double& ox, double& oy) const noexcept {
    ox = m[0] * x + m[1] * y + m[2];
    oy = m[3] * x + m[4] * y + m[5];
  }
  bool operator==(const AffineWarp&) const = default;
};

/// compose(w1, w2) applies w2 first, then w1.
AffineWarp compose(const AffineWarp& w1, const AffineWarp& w2);
AffineWarp invert(const AffineWarp& w);

/// Rotation by `degrees` (counter-clockwise on screen, y down) about the
/// center of an h x w image, followed by a translation. Multiples of 90
/// degrees use exact sines and cosines.
AffineWarp rotation_about_center(double degrees, int height, int width, double tx = 0.0, double ty = 0.0);

struct WarpResult {
  ImageTensor image;
  Mask valid;
};

/// out(p) = img(warp^-1 p), bilinear. A pixel is valid when its source point
/// lies inside the input (and, given `input_valid`, every input pixel it
/// draws on is valid). Invalid pixels are 0.
WarpResult warp_image(const ImageTensor& img, const AffineWarp& warp, int out_height, int out_width,
                      const Mask* input_valid = nullptr);

struct EccConfig {
  int max_iterations = 200;  // per pyramid level
  double epsilon = 1e-6;     // stop when the coefficient gains less than this
  int pyramid_levels = 3;
  AffineWarp initial;        // in the warp_image(moving, .) ~ reference sense

  void validate() const;
};

struct EccResult {
  AffineWarp warp;  // warp_image(moving, warp) ~ reference
  double coefficient = 0.0;
  int iterations = 0;
};

/// Enhanced-correlation-coefficient affine alignment on luma, coarse to fine.
/// Pixels of `moving` outside `moving_valid` are ignored. Throws
/// NumericError when the increment diverges or the correlation cannot be
/// raised, GeometryError for a non-invertible warp.
EccResult ecc_align(const ImageTensor& reference, const ImageTensor& moving, const EccConfig& config = {},
                    const Mask* moving_valid = nullptr);

struct RegistrationTrial {
  std::string scene;
  double angle = 0.0;
  AffineWarp applied;    // T: moving = warp_image(target, T)
  AffineWarp estimate;   // estimated inverse of T
  double psnr = 0.0;
  double psnr_truth = 0.0;
  int iterations = 0;
  double coefficient = 0.0;
  bool failed = false;
  std::string error;
};

struct RegistrationAngleSummary {
  double angle = 0.0;
  int trials = 0;
  int failures = 0;
  double mean_psnr = 0.0;        // over successful, finite trials
  double mean_psnr_truth = 0.0;
};

struct RegistrationBenchConfig {
  std::vector<double> angles{2.0, 10.0, 18.0, 26.0};
  double max_translation = 5.0;
  std::uint64_t seed = 0;
  EccConfig ecc;
  int threads = 1;
};

struct RegistrationBenchReport {
  RegistrationBenchConfig config;
  bool transformed = false;
  std::vector<RegistrationTrial> trials;  // scene-major, then angle
  std::vector<RegistrationAngleSummary> angles;
};

/// Per scene and angle: warps the second instance by a rotation about the
/// center plus a random translation, aligns (through `weights` and
/// normalize_to_8bit when given) against the first instance, undoes the
/// warp with the estimate, and scores PSNR against the unwarped second
/// instance. The exact inverse gives the interpolation-only baseline; both
/// PSNRs use the intersection of their valid masks.
RegistrationBenchReport run_registration_benchmark(const std::vector<SceneSet>& scenes, const ModelWeights* weights,
                                                   const RegistrationBenchConfig& config);

}  // namespace photocon
