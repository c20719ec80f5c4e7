#pragma once

// Differentiable loss terms over planar representations and the per-triplet
// objective with its parameter gradient.

#include <cmath>
#include <span>

#include "photocon/detail/engine.hpp"
#include "photocon/losses.hpp"

namespace photocon::detail {

/// d_corr over flattened matrices. When gx/gy are non-null, adds
/// scale * d(d_corr)/dx (resp. dy) into them.
template <typename T>
T d_corr_grad(const Mat<T>& x, const Mat<T>& y, T eps, T scale, Mat<T>* gx, Mat<T>* gy) {
  const T s = (x.array() * y.array()).sum();
  const T lx = x.norm(), ly = y.norm();
  const T nx = lx + eps, ny = ly + eps;
  const T d = T(1) - s / (nx * ny);
  if (gx) {
    gx->noalias() += (-scale / (nx * ny)) * y;
    if (lx > T(0)) gx->noalias() += (scale * s / (nx * nx * ny * lx)) * x;
  }
  if (gy) {
    gy->noalias() += (-scale / (nx * ny)) * x;
    if (ly > T(0)) gy->noalias() += (scale * s / (nx * ny * ny * ly)) * y;
  }
  return d;
}

/// Multi-channel similarity over the rows of `rep` (K x pixels).
template <typename T>
T multi_channel_grad(const Mat<T>& rep, T eps, T scale, Mat<T>* g) {
  const Eigen::Index k = rep.rows();
  if (k < 2) return T(0);
  Eigen::Matrix<T, Eigen::Dynamic, 1> len(k);
  for (Eigen::Index i = 0; i < k; ++i) len(i) = rep.row(i).norm();
  T total = T(0);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = i + 1; j < k; ++j) {
      const T s = rep.row(i).dot(rep.row(j));
      const T ni = len(i) + eps, nj = len(j) + eps;
      const T c = s / (ni * nj);
      total += T(2) * c * c;
      if (!g) continue;
      // d/dc of 2 c^2 is 4c.
      const T f = scale * T(4) * c;
      g->row(i).noalias() += (f / (ni * nj)) * rep.row(j);
      g->row(j).noalias() += (f / (ni * nj)) * rep.row(i);
      if (len(i) > T(0)) g->row(i).noalias() -= (f * s / (ni * ni * nj * len(i))) * rep.row(i);
      if (len(j) > T(0)) g->row(j).noalias() -= (f * s / (ni * nj * nj * len(j))) * rep.row(j);
    }
  return total;
}

struct ResizeTap {
  int lo, hi;
  double frac;
};

inline std::vector<ResizeTap> resize_taps(int in, int out) {
  std::vector<ResizeTap> taps(out);
  for (int i = 0; i < out; ++i) {
    const double src = out == 1 ? 0.0 : static_cast<double>(i) * (in - 1) / (out - 1);
    int lo = std::clamp(static_cast<int>(std::floor(src)), 0, in - 1);
    taps[i] = {lo, std::min(lo + 1, in - 1), src - lo};
  }
  return taps;
}

/// Geometry of the "upsample by rho then center crop" operator.
struct ScaleCrop {
  int h, w;    // input and output size
  int sh, sw;  // upsampled size
  int y0, x0;  // crop offset

  ScaleCrop(int h_, int w_, double rho)
      : h(h_), w(w_), sh(static_cast<int>(std::lround(h_ * rho))), sw(static_cast<int>(std::lround(w_ * rho))) {
    sh = std::max(sh, h);
    sw = std::max(sw, w);
    y0 = (sh - h) / 2;
    x0 = (sw - w) / 2;
  }
};

/// Corner-aligned bilinear resize of planar features restricted to the crop window.
template <typename T>
Mat<T> scale_crop(const Mat<T>& in, const ScaleCrop& g) {
  const auto ty = resize_taps(g.h, g.sh);
  const auto tx = resize_taps(g.w, g.sw);
  Mat<T> out(in.rows(), static_cast<Eigen::Index>(g.h) * g.w);
  for (Eigen::Index c = 0; c < in.rows(); ++c) {
    const T* s = in.row(c).data();
    for (int i = 0; i < g.h; ++i) {
      const auto& a = ty[g.y0 + i];
      for (int j = 0; j < g.w; ++j) {
        const auto& b = tx[g.x0 + j];
        const double top = (1.0 - b.frac) * s[a.lo * g.w + b.lo] + b.frac * s[a.lo * g.w + b.hi];
        const double bot = (1.0 - b.frac) * s[a.hi * g.w + b.lo] + b.frac * s[a.hi * g.w + b.hi];
        out(c, i * g.w + j) = static_cast<T>((1.0 - a.frac) * top + a.frac * bot);
      }
    }
  }
  return out;
}

template <typename T>
Mat<T> scale_crop_adjoint(const Mat<T>& gout, const ScaleCrop& g) {
  const auto ty = resize_taps(g.h, g.sh);
  const auto tx = resize_taps(g.w, g.sw);
  Mat<T> gin = Mat<T>::Zero(gout.rows(), static_cast<Eigen::Index>(g.h) * g.w);
  for (Eigen::Index c = 0; c < gout.rows(); ++c) {
    T* d = gin.row(c).data();
    for (int i = 0; i < g.h; ++i) {
      const auto& a = ty[g.y0 + i];
      for (int j = 0; j < g.w; ++j) {
        const auto& b = tx[g.x0 + j];
        const T v = gout(c, i * g.w + j);
        const T wa0 = static_cast<T>(1.0 - a.frac), wa1 = static_cast<T>(a.frac);
        const T wb0 = static_cast<T>(1.0 - b.frac), wb1 = static_cast<T>(b.frac);
        d[a.lo * g.w + b.lo] += v * wa0 * wb0;
        d[a.lo * g.w + b.hi] += v * wa0 * wb1;
        d[a.hi * g.w + b.lo] += v * wa1 * wb0;
        d[a.hi * g.w + b.hi] += v * wa1 * wb1;
      }
    }
  }
  return gin;
}

/// Counter-clockwise rotation of square planar features by q quarter turns.
template <typename T>
Mat<T> rotate_planar(const Mat<T>& in, int n, int q) {
  q = ((q % 4) + 4) % 4;
  if (q == 0) return in;
  Mat<T> out(in.rows(), in.cols());
  for (Eigen::Index c = 0; c < in.rows(); ++c)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        int sy = 0, sx = 0;
        switch (q) {
          case 1: sy = j; sx = n - 1 - i; break;
          case 2: sy = n - 1 - i; sx = n - 1 - j; break;
          default: sy = n - 1 - j; sx = i; break;
        }
        out(c, i * n + j) = in(c, sy * n + sx);
      }
  return out;
}

/// Planar input triplet for the objective.
template <typename T>
struct TripletInput {
  Mat<T> anchor, positive, negative;
  int side = 0;
};

template <typename T>
TripletInput<T> to_planar_input(const PatchTriplet& t) {
  TripletInput<T> in;
  in.side = t.anchor.height();
  auto conv = [](const ImageTensor& img) {
    const auto p = img.to_planar();
    return Eigen::Map<const Mat<float>>(p.data(), img.channels(), static_cast<Eigen::Index>(img.pixels()))
        .template cast<T>()
        .eval();
  };
  in.anchor = conv(t.anchor);
  in.positive = conv(t.positive);
  in.negative = conv(t.negative);
  return in;
}

/// Loss for one triplet; gradient accumulated into `grad` when non-empty.
template <typename T>
LossBreakdown triplet_objective(const Engine<T>& net, std::span<const T> params, const TripletInput<T>& in,
                                const LossWeights& lw, const AuxDraw& aux, std::span<T> grad,
                                bool compute_all_terms = false) {
  using Cache = typename Engine<T>::Cache;
  const bool want_grad = !grad.empty();
  const int n = in.side;
  const T eps = static_cast<T>(lw.epsilon_norm);
  auto active = [&](double w) { return compute_all_terms || w != 0.0; };

  Cache ca, cp, cn;
  const Mat<T> ra = net.forward(params, in.anchor, n, n, want_grad ? &ca : nullptr);
  const Mat<T> rp = net.forward(params, in.positive, n, n, want_grad ? &cp : nullptr);
  const Mat<T> rn = net.forward(params, in.negative, n, n, want_grad ? &cn : nullptr);
  Mat<T> ga, gp, gn;
  if (want_grad) {
    ga = Mat<T>::Zero(ra.rows(), ra.cols());
    gp = Mat<T>::Zero(rp.rows(), rp.cols());
    gn = Mat<T>::Zero(rn.rows(), rn.cols());
  }

  LossBreakdown out;
  if (active(lw.w_triplet)) {
    Mat<T> tap_a, tap_p, tan_a, tan_n;
    if (want_grad) {
      tap_a = Mat<T>::Zero(ra.rows(), ra.cols());
      tap_p = tap_a;
      tan_a = tap_a;
      tan_n = tap_a;
    }
    const T dap = d_corr_grad<T>(ra, rp, eps, T(1), want_grad ? &tap_a : nullptr, want_grad ? &tap_p : nullptr);
    const T dan = d_corr_grad<T>(ra, rn, eps, T(1), want_grad ? &tan_a : nullptr, want_grad ? &tan_n : nullptr);
    const T hinge = dap - dan + static_cast<T>(lw.margin);
    out.raw.triplet = hinge > T(0) ? static_cast<double>(hinge) : 0.0;
    if (want_grad && hinge > T(0) && lw.w_triplet != 0.0) {
      const T w = static_cast<T>(lw.w_triplet);
      ga.noalias() += w * (tap_a - tan_a);
      gp.noalias() += w * tap_p;
      gn.noalias() -= w * tan_n;
    }
  }

  if (active(lw.w_intra)) {
    const T w = static_cast<T>(lw.w_intra);
    const bool g = want_grad && lw.w_intra != 0.0;
    const T dc = d_corr_grad<T>(ra, rp, eps, w, g ? &ga : nullptr, g ? &gp : nullptr);
    const T denom = lw.intra_mean_l2 ? static_cast<T>(ra.size()) : T(1);
    const Mat<T> diff = ra - rp;
    const T l2 = diff.squaredNorm() / denom;
    out.raw.intra = static_cast<double>(dc + l2);
    if (g) {
      ga.noalias() += (T(2) * w / denom) * diff;
      gp.noalias() -= (T(2) * w / denom) * diff;
    }
  }

  if (active(lw.w_mc)) {
    const T w = static_cast<T>(lw.w_mc / 3.0);
    const bool g = want_grad && lw.w_mc != 0.0;
    const T mc = multi_channel_grad<T>(ra, eps, w, g ? &ga : nullptr) +
                 multi_channel_grad<T>(rp, eps, w, g ? &gp : nullptr) +
                 multi_channel_grad<T>(rn, eps, w, g ? &gn : nullptr);
    out.raw.mc = static_cast<double>(mc) / 3.0;
  }

  Cache cs, cr;
  Mat<T> gs, gr;
  if (active(lw.w_scale)) {
    const bool g = want_grad && lw.w_scale != 0.0;
    const ScaleCrop geo(n, n, aux.rho);
    const Mat<T> scaled_in = scale_crop<T>(in.anchor, geo);
    const Mat<T> rs = net.forward(params, scaled_in, n, n, g ? &cs : nullptr);
    const Mat<T> scaled_rep = scale_crop<T>(ra, geo);
    Mat<T> g_rep;
    if (g) {
      gs = Mat<T>::Zero(rs.rows(), rs.cols());
      g_rep = Mat<T>::Zero(rs.rows(), rs.cols());
    }
    out.raw.scale = static_cast<double>(
        d_corr_grad<T>(rs, scaled_rep, eps, static_cast<T>(lw.w_scale), g ? &gs : nullptr, g ? &g_rep : nullptr));
    if (g) ga.noalias() += scale_crop_adjoint<T>(g_rep, geo);
  }

  if (active(lw.w_rot)) {
    const bool g = want_grad && lw.w_rot != 0.0;
    const int q = aux.quarter_turns;
    const Mat<T> rot_in = rotate_planar<T>(in.anchor, n, q);
    const Mat<T> rr = net.forward(params, rot_in, n, n, g ? &cr : nullptr);
    const Mat<T> diff = rr - rotate_planar<T>(ra, n, q);
    out.raw.rot = static_cast<double>(diff.squaredNorm());
    if (g) {
      const T w = static_cast<T>(lw.w_rot);
      gr = (T(2) * w) * diff;
      ga.noalias() -= rotate_planar<T>(gr, n, -q);
    }
  }

  out.weighted = {lw.w_triplet * out.raw.triplet, lw.w_intra * out.raw.intra, lw.w_scale * out.raw.scale,
                  lw.w_mc * out.raw.mc, lw.w_rot * out.raw.rot};
  out.total = out.weighted.sum();

  if (want_grad) {
    net.backward(params, ca, ga, grad);
    net.backward(params, cp, gp, grad);
    net.backward(params, cn, gn, grad);
    if (gs.size()) net.backward(params, cs, gs, grad);
    if (gr.size()) net.backward(params, cr, gr, grad);
  }
  return out;
}

}  // namespace photocon::detail
