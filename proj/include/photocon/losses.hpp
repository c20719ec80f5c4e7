#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "photocon/dataset.hpp"
#include "photocon/image.hpp"
#include "photocon/network.hpp"

namespace photocon {

struct LossWeights {
  double w_triplet = 1.0;
  double w_intra = 1.0;
  double w_scale = 1.0;
  double w_mc = 0.1;
  double w_rot = 0.0;
  double margin = 0.1;
  double epsilon_norm = 1e-8;
  // Squared-L2 part of the intra loss divided by the element count.
  bool intra_mean_l2 = true;

  void validate() const;
};

struct LossTerms {
  double triplet = 0.0;
  double intra = 0.0;
  double scale = 0.0;
  double mc = 0.0;
  double rot = 0.0;

  double sum() const noexcept { return triplet + intra + scale + mc + rot; }
};

struct LossBreakdown {
  LossTerms raw;       // unweighted term values (zero when a term was skipped)
  LossTerms weighted;  // contributions to total
  double total = 0.0;
};

/// Random choices made by the auxiliary losses for one sample.
struct AuxDraw {
  double rho = 1.5;        // upsampling factor in (1, 2]
  int quarter_turns = 1;   // rotation by 90 * quarter_turns degrees
};

AuxDraw draw_aux(std::uint64_t seed);

/// Maps an image to its representation; identity substitutes are useful in tests.
using TransformFn = std::function<ImageTensor(const ImageTensor&)>;

/// 1 - x.y / ((|x| + eps)(|y| + eps)).
double d_corr(std::span<const float> x, std::span<const float> y, double epsilon_norm = 1e-8);

double triplet_loss(const ImageTensor& ra, const ImageTensor& rp, const ImageTensor& rn, double margin = 0.1,
                    double epsilon_norm = 1e-8);

/// d_corr(ra, rp) + |ra - rp|^2 (sum of squares, or the mean when `mean_l2`).
double intra_loss(const ImageTensor& ra, const ImageTensor& rp, bool mean_l2 = false, double epsilon_norm = 1e-8);

/// Sum over ordered channel pairs i != j of (1 - d_corr(ch_i, ch_j))^2.
double multi_channel_loss(const ImageTensor& rep, double epsilon_norm = 1e-8);

/// Upsample by rho with corner-aligned bilinear sampling, then center-crop
/// back to the input size.
ImageTensor upsample_and_crop(const ImageTensor& img, double rho);

double scale_consistency_loss(const TransformFn& transform, const ImageTensor& anchor, double rho,
                              double epsilon_norm = 1e-8);
double scale_consistency_loss(const ModelWeights& weights, const ImageTensor& anchor, double rho,
                              double epsilon_norm = 1e-8);

/// |F(rot(fa)) - rot(F(fa))|^2 with angle in {90, 180, 270}.
double rotation_invariance_loss(const TransformFn& transform, const ImageTensor& anchor, int angle_degrees);
double rotation_invariance_loss(const ModelWeights& weights, const ImageTensor& anchor, int angle_degrees);

/// Weighted objective for one triplet. Auxiliary random choices come from `aux_seed`.
LossBreakdown total_loss(const ModelWeights& weights, const PatchTriplet& triplet, const LossWeights& lw,
                         std::uint64_t aux_seed, bool compute_all_terms = false);

}  // namespace photocon
