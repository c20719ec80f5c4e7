#include "photocon/losses.hpp"

#include <cmath>

#include "photocon/detail/objective.hpp"
#include "photocon/error.hpp"
#include "photocon/random.hpp"

namespace photocon {

void LossWeights::validate() const {
  for (double w : {w_triplet, w_intra, w_scale, w_mc, w_rot})
    if (!(w >= 0.0) || !std::isfinite(w)) throw UsageError("loss weights must be finite and nonnegative");
  if (!(margin > 0.0)) throw UsageError("triplet margin must be positive");
  if (!(epsilon_norm > 0.0)) throw UsageError("epsilon_norm must be positive");
}

AuxDraw draw_aux(std::uint64_t seed) {
  Rng rng(seed);
  AuxDraw a;
  a.rho = 2.0 - uniform(rng, 0.0, 1.0);  // (1, 2]
  a.quarter_turns = uniform_int(rng, 1, 3);
  return a;
}

double d_corr(std::span<const float> x, std::span<const float> y, double epsilon_norm) {
  if (x.size() != y.size() || x.empty())
    throw GeometryError("d_corr: length mismatch (" + std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
  double s = 0.0, xx = 0.0, yy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    s += static_cast<double>(x[i]) * y[i];
    xx += static_cast<double>(x[i]) * x[i];
    yy += static_cast<double>(y[i]) * y[i];
  }
  return 1.0 - s / ((std::sqrt(xx) + epsilon_norm) * (std::sqrt(yy) + epsilon_norm));
}

namespace {

void require_same(const ImageTensor& a, const ImageTensor& b, const char* what) {
  if (!a.same_shape(b)) throw GeometryError(std::string(what) + ": representation shapes differ");
}

}  // namespace

double triplet_loss(const ImageTensor& ra, const ImageTensor& rp, const ImageTensor& rn, double margin,
                    double epsilon_norm) {
  require_same(ra, rp, "triplet_loss");
  require_same(ra, rn, "triplet_loss");
  const double h = d_corr(ra.data(), rp.data(), epsilon_norm) - d_corr(ra.data(), rn.data(), epsilon_norm) + margin;
  return std::max(0.0, h);
}

double intra_loss(const ImageTensor& ra, const ImageTensor& rp, bool mean_l2, double epsilon_norm) {
  require_same(ra, rp, "intra_loss");
  double sq = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double d = static_cast<double>(ra.data()[i]) - rp.data()[i];
    sq += d * d;
  }
  if (mean_l2) sq /= static_cast<double>(ra.size());
  return d_corr(ra.data(), rp.data(), epsilon_norm) + sq;
}

double multi_channel_loss(const ImageTensor& rep, double epsilon_norm) {
  const int k = rep.channels();
  if (k < 2) return 0.0;
  const auto planes = rep.to_planar();
  const std::size_t n = rep.pixels();
  double total = 0.0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      if (i == j) continue;
      const double c = 1.0 - d_corr(std::span(planes).subspan(i * n, n), std::span(planes).subspan(j * n, n), epsilon_norm);
      total += c * c;
    }
  return total;
}

ImageTensor upsample_and_crop(const ImageTensor& img, double rho) {
  if (!(rho > 1.0 && rho <= 2.0)) throw UsageError("rho must lie in (1, 2], got " + std::to_string(rho));
  const detail::ScaleCrop g(img.height(), img.width(), rho);
  const ImageTensor up = bilinear_resize(img, g.sh, g.sw);
  return crop_rect(up, g.x0, g.y0, g.h, g.w);
}

double scale_consistency_loss(const TransformFn& transform, const ImageTensor& anchor, double rho,
                              double epsilon_norm) {
  const ImageTensor a = transform(upsample_and_crop(anchor, rho));
  const ImageTensor b = upsample_and_crop(transform(anchor), rho);
  return d_corr(a.data(), b.data(), epsilon_norm);
}

double scale_consistency_loss(const ModelWeights& weights, const ImageTensor& anchor, double rho,
                              double epsilon_norm) {
  return scale_consistency_loss([&](const ImageTensor& x) { return forward(weights, x); }, anchor, rho, epsilon_norm);
}

namespace {

int quarter_turns_for(int angle_degrees) {
  switch (angle_degrees) {
    case 90: return 1;
    case 180: return 2;
    case 270: return 3;
    default: throw UsageError("rotation angle must be 90, 180 or 270, got " + std::to_string(angle_degrees));
  }
}

}  // namespace

double rotation_invariance_loss(const TransformFn& transform, const ImageTensor& anchor, int angle_degrees) {
  const int q = quarter_turns_for(angle_degrees);
  if (anchor.height() != anchor.width()) throw GeometryError("rotation loss needs a square patch");
  const ImageTensor a = transform(rotate90(anchor, q));
  const ImageTensor b = rotate90(transform(anchor), q);
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - b.data()[i];
    sq += d * d;
  }
  return sq;
}

double rotation_invariance_loss(const ModelWeights& weights, const ImageTensor& anchor, int angle_degrees) {
  return rotation_invariance_loss([&](const ImageTensor& x) { return forward(weights, x); }, anchor, angle_degrees);
}

LossBreakdown total_loss(const ModelWeights& weights, const PatchTriplet& triplet, const LossWeights& lw,
                         std::uint64_t aux_seed, bool compute_all_terms) {
  lw.validate();
  if (!triplet.anchor.same_shape(triplet.positive) || !triplet.anchor.same_shape(triplet.negative) ||
      triplet.anchor.height() != triplet.anchor.width())
    throw GeometryError("total_loss: triplet patches must be equal-sized squares");
  const detail::Engine<float> net(detail::make_layout(weights.config, weights.in_channels()));
  const auto params = weights.flatten();
  const auto in = detail::to_planar_input<float>(triplet);
  return detail::triplet_objective<float>(net, params, in, lw, draw_aux(aux_seed), {}, compute_all_terms);
}

}  // namespace photocon
