#pragma once

// Forward/backward kernels for the transform network, templated on the
// scalar type: float for training and inference, double for gradient checks.
// Feature maps are planar: a C x (H*W) row-major matrix.

#include <Eigen/Dense>

#include <algorithm>
#include <cstdlib>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "photocon/error.hpp"
#include "photocon/network.hpp"

namespace photocon::detail {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvSpec {
  std::string name;
  int cin = 0;
  int cout = 0;
  int k = 1;
  int stride = 1;
  std::size_t w_off = 0;
  std::size_t b_off = 0;
};

struct BlockSpec {
  ConvSpec b1, b3, b5;
  int cin() const { return b1.cin; }
  int width() const { return b1.cout + b3.cout + b5.cout; }
};

struct TensorSlot {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::size_t offset = 0;
  std::size_t numel = 0;
};

struct NetLayout {
  NetworkConfig config;
  int in_channels = 3;
  std::vector<BlockSpec> enc;   // levels + 1 (last one is the bottleneck)
  std::vector<ConvSpec> down;   // down[l] feeds enc[l + 1]
  std::vector<ConvSpec> up;     // up[l] produces level-l features from level l + 1
  std::vector<BlockSpec> dec;   // dec[l] at level l
  ConvSpec head;
  std::vector<TensorSlot> slots;  // serialization order
  std::size_t total = 0;
};

NetLayout make_layout(const NetworkConfig& config, int in_channels);

/// Reflect (mirror without edge repeat) padding of planar features to h2 x w2 (bottom/right).
template <typename T>
Mat<T> reflect_pad(const Mat<T>& in, int h, int w, int h2, int w2) {
  if (h2 == h && w2 == w) return in;
  auto reflect = [](int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
  };
  Mat<T> out(in.rows(), static_cast<Eigen::Index>(h2) * w2);
  for (Eigen::Index c = 0; c < in.rows(); ++c)
    for (int y = 0; y < h2; ++y) {
      const int sy = reflect(y, h);
      for (int x = 0; x < w2; ++x) out(c, y * w2 + x) = in(c, sy * w + reflect(x, w));
    }
  return out;
}

template <typename T>
Mat<T> crop_planar(const Mat<T>& in, int w, int y0, int x0, int h2, int w2) {
  Mat<T> out(in.rows(), static_cast<Eigen::Index>(h2) * w2);
  for (Eigen::Index c = 0; c < in.rows(); ++c)
    for (int y = 0; y < h2; ++y)
      for (int x = 0; x < w2; ++x) out(c, y * w2 + x) = in(c, (y0 + y) * w + x0 + x);
  return out;
}

/// Adjoint of crop_planar: embeds into zeros.
template <typename T>
Mat<T> uncrop_planar(const Mat<T>& g, int h, int w, int y0, int x0, int h2, int w2) {
  Mat<T> out = Mat<T>::Zero(g.rows(), static_cast<Eigen::Index>(h) * w);
  for (Eigen::Index c = 0; c < g.rows(); ++c)
    for (int y = 0; y < h2; ++y)
      for (int x = 0; x < w2; ++x) out(c, (y0 + y) * w + x0 + x) = g(c, y * w2 + x);
  return out;
}

struct Tap {
  int dy, dx;
};

/// Kernel offsets ordered by ring: center, then the 3x3 ring, then the 5x5
/// ring, so the taps of a k x k kernel are a prefix of any larger one.
inline std::vector<Tap> ring_taps(int k) {
  std::vector<Tap> taps{{0, 0}};
  for (int r = 1; r <= (k - 1) / 2; ++r)
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx)
        if (std::max(std::abs(dy), std::abs(dx)) == r) taps.push_back({dy, dx});
  return taps;
}

/// Column matrix of the first `nt` taps for output rows [oy0, oy1);
/// row index = tap * cin + c.
template <typename T>
void im2col(const Mat<T>& in, int h, int w, const std::vector<Tap>& taps, int nt, int stride, int oy0, int oy1,
            int wo, Mat<T>& col) {
  const int cin = static_cast<int>(in.rows());
  col.resize(static_cast<Eigen::Index>(nt) * cin, static_cast<Eigen::Index>(oy1 - oy0) * wo);
  for (int t = 0; t < nt; ++t)
    for (int c = 0; c < cin; ++c) {
      const T* src = in.row(c).data();
      T* dst = col.row(t * cin + c).data();
      for (int oy = oy0; oy < oy1; ++oy) {
        T* d = dst + static_cast<std::ptrdiff_t>(oy - oy0) * wo;
        const int iy = oy * stride + taps[t].dy;
        if (iy < 0 || iy >= h) {
          std::fill(d, d + wo, T(0));
          continue;
        }
        const T* srow = src + static_cast<std::ptrdiff_t>(iy) * w;
        if (stride == 1) {
          const int off = taps[t].dx;
          const int x0 = std::clamp(-off, 0, wo);
          const int x1 = std::clamp(w - off, x0, wo);
          std::fill(d, d + x0, T(0));
          std::copy(srow + x0 + off, srow + x1 + off, d + x0);
          std::fill(d + x1, d + wo, T(0));
        } else {
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + taps[t].dx;
            d[ox] = (ix >= 0 && ix < w) ? srow[ix] : T(0);
          }
        }
      }
    }
}

/// Adjoint of im2col: accumulates the first `nt` taps of `col` into `out`.
template <typename T>
void col2im_add(const Mat<T>& col, const std::vector<Tap>& taps, int nt, int stride, int oy0, int oy1, int wo, int h,
                int w, Mat<T>& out) {
  const int cin = static_cast<int>(out.rows());
  for (int t = 0; t < nt; ++t)
    for (int c = 0; c < cin; ++c) {
      const T* src = col.row(t * cin + c).data();
      T* dst = out.row(c).data();
      for (int oy = oy0; oy < oy1; ++oy) {
        const int iy = oy * stride + taps[t].dy;
        if (iy < 0 || iy >= h) continue;
        const T* srow = src + static_cast<std::ptrdiff_t>(oy - oy0) * wo;
        T* d = dst + static_cast<std::ptrdiff_t>(iy) * w;
        if (stride == 1) {
          const int off = taps[t].dx;
          const int x0 = std::clamp(-off, 0, wo);
          const int x1 = std::clamp(w - off, x0, wo);
          T* dd = d + off;
          for (int ox = x0; ox < x1; ++ox) dd[ox] += srow[ox];
        } else {
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + taps[t].dx;
            if (ix >= 0 && ix < w) d[ix] += srow[ox];
          }
        }
      }
    }
}

/// 2x bilinear upsampling with half-pixel centers and edge clamping.
template <typename T>
Mat<T> upsample2x(const Mat<T>& in, int h, int w) {
  const int h2 = 2 * h, w2 = 2 * w;
  Mat<T> tmp(in.rows(), static_cast<Eigen::Index>(h) * w2);
  for (Eigen::Index c = 0; c < in.rows(); ++c)
    for (int y = 0; y < h; ++y) {
      const T* s = in.row(c).data() + static_cast<std::ptrdiff_t>(y) * w;
      T* d = tmp.row(c).data() + static_cast<std::ptrdiff_t>(y) * w2;
      for (int x = 0; x < w; ++x) {
        const T left = s[std::max(x - 1, 0)], right = s[std::min(x + 1, w - 1)];
        d[2 * x] = T(0.75) * s[x] + T(0.25) * left;
        d[2 * x + 1] = T(0.75) * s[x] + T(0.25) * right;
      }
    }
  Mat<T> out(in.rows(), static_cast<Eigen::Index>(h2) * w2);
  for (Eigen::Index c = 0; c < in.rows(); ++c)
    for (int y = 0; y < h; ++y) {
      const T* s = tmp.row(c).data();
      const T* mid = s + static_cast<std::ptrdiff_t>(y) * w2;
      const T* up = s + static_cast<std::ptrdiff_t>(std::max(y - 1, 0)) * w2;
      const T* dn = s + static_cast<std::ptrdiff_t>(std::min(y + 1, h - 1)) * w2;
      T* d0 = out.row(c).data() + static_cast<std::ptrdiff_t>(2 * y) * w2;
      T* d1 = d0 + w2;
      for (int x = 0; x < w2; ++x) {
        d0[x] = T(0.75) * mid[x] + T(0.25) * up[x];
        d1[x] = T(0.75) * mid[x] + T(0.25) * dn[x];
      }
    }
  return out;
}

/// Adjoint of upsample2x; g is C x (2h * 2w).
template <typename T>
Mat<T> upsample2x_adjoint(const Mat<T>& g, int h, int w) {
  const int w2 = 2 * w;
  Mat<T> tmp = Mat<T>::Zero(g.rows(), static_cast<Eigen::Index>(h) * w2);
  for (Eigen::Index c = 0; c < g.rows(); ++c)
    for (int y = 0; y < h; ++y) {
      const T* g0 = g.row(c).data() + static_cast<std::ptrdiff_t>(2 * y) * w2;
      const T* g1 = g0 + w2;
      T* base = tmp.row(c).data();
      T* mid = base + static_cast<std::ptrdiff_t>(y) * w2;
      T* up = base + static_cast<std::ptrdiff_t>(std::max(y - 1, 0)) * w2;
      T* dn = base + static_cast<std::ptrdiff_t>(std::min(y + 1, h - 1)) * w2;
      for (int x = 0; x < w2; ++x) {
        mid[x] += T(0.75) * (g0[x] + g1[x]);
        up[x] += T(0.25) * g0[x];
        dn[x] += T(0.25) * g1[x];
      }
    }
  Mat<T> out = Mat<T>::Zero(g.rows(), static_cast<Eigen::Index>(h) * w);
  for (Eigen::Index c = 0; c < g.rows(); ++c)
    for (int y = 0; y < h; ++y) {
      const T* s = tmp.row(c).data() + static_cast<std::ptrdiff_t>(y) * w2;
      T* d = out.row(c).data() + static_cast<std::ptrdiff_t>(y) * w;
      for (int x = 0; x < w; ++x) {
        d[x] += T(0.75) * (s[2 * x] + s[2 * x + 1]);
        d[std::max(x - 1, 0)] += T(0.25) * s[2 * x];
        d[std::min(x + 1, w - 1)] += T(0.25) * s[2 * x + 1];
      }
    }
  return out;
}

template <typename T>
class Engine {
 public:
  struct ConvCache {
    Mat<T> in;
    Mat<T> out;  // post-activation output
    int h_in = 0, w_in = 0, h_out = 0, w_out = 0;
  };
  struct BlockCache {
    Mat<T> in;
    Mat<T> out;
    int h = 0, w = 0;
  };
  struct Cache {
    int h = 0, w = 0;        // padded working size
    int orig_h = 0, orig_w = 0;
    std::vector<BlockCache> enc, dec;
    std::vector<ConvCache> down, up;
    ConvCache head;
  };

  explicit Engine(NetLayout layout) : layout_(std::move(layout)), taps_(ring_taps(5)) {}

  const NetLayout& layout() const noexcept { return layout_; }
  std::size_t parameter_count() const noexcept { return layout_.total; }

  /// input: C x (h*w). Returns K x (h*w). When `cache` is non-null every
  /// intermediate needed by backward() is retained.
  Mat<T> forward(std::span<const T> p, const Mat<T>& input, int h, int w, Cache* cache) const {
    const int align = layout_.config.alignment();
    if (h < align || w < align)
      throw GeometryError("network input " + std::to_string(h) + "x" + std::to_string(w) +
                          " is smaller than the minimum side " + std::to_string(align));
    if (input.rows() != layout_.in_channels)
      throw GeometryError("network expects " + std::to_string(layout_.in_channels) + " input channels, got " +
                          std::to_string(input.rows()));
    const int hp = (h + align - 1) / align * align;
    const int wp = (w + align - 1) / align * align;
    const int levels = layout_.config.levels;
    if (cache) {
      cache->h = hp;
      cache->w = wp;
      cache->orig_h = h;
      cache->orig_w = w;
      cache->enc.assign(levels + 1, {});
      cache->dec.assign(levels, {});
      cache->down.assign(levels, {});
      cache->up.assign(levels, {});
    }

    std::vector<Mat<T>> skips(levels + 1);
    Mat<T> x = reflect_pad<T>(input, h, w, hp, wp);
    skips[0] = block_forward(p, layout_.enc[0], std::move(x), hp, wp, cache ? &cache->enc[0] : nullptr);
    for (int l = 1; l <= levels; ++l) {
      const int hl = hp >> l, wl = wp >> l;
      Mat<T> d = conv_forward(p, layout_.down[l - 1], skips[l - 1], hl * 2, wl * 2, true,
                              cache ? &cache->down[l - 1] : nullptr);
      skips[l] = block_forward(p, layout_.enc[l], std::move(d), hl, wl, cache ? &cache->enc[l] : nullptr);
    }
    Mat<T> y = std::move(skips[levels]);
    for (int l = levels - 1; l >= 0; --l) {
      const int hl = hp >> l, wl = wp >> l;
      Mat<T> u = conv_forward(p, layout_.up[l], upsample2x<T>(y, hl / 2, wl / 2), hl, wl, true,
                              cache ? &cache->up[l] : nullptr);
      Mat<T> cat(u.rows() + skips[l].rows(), u.cols());
      cat << u, skips[l];
      u.resize(0, 0);
      skips[l].resize(0, 0);
      y = block_forward(p, layout_.dec[l], std::move(cat), hl, wl, cache ? &cache->dec[l] : nullptr);
    }
    Mat<T> out = conv_forward(p, layout_.head, std::move(y), hp, wp, false, cache ? &cache->head : nullptr);
    if (hp != h || wp != w) out = crop_planar<T>(out, wp, 0, 0, h, w);
    return out;
  }

  /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
  void backward(std::span<const T> p, const Cache& cache, const Mat<T>& grad_out, std::span<T> grad) const {
    const int levels = layout_.config.levels;
    const int hp = cache.h, wp = cache.w;
    Mat<T> g = grad_out;
    if (hp != cache.orig_h || wp != cache.orig_w)
      g = uncrop_planar<T>(g, hp, wp, 0, 0, cache.orig_h, cache.orig_w);
    g = conv_backward(p, layout_.head, cache.head, std::move(g), false, grad, true);

    std::vector<Mat<T>> skip_grad(levels + 1);
    for (int l = 0; l < levels; ++l) {
      const int hl = hp >> l, wl = wp >> l;
      Mat<T> gcat = block_backward(p, layout_.dec[l], cache.dec[l], std::move(g), grad, true);
      const Eigen::Index wu = layout_.up[l].cout;
      skip_grad[l] = gcat.bottomRows(gcat.rows() - wu);
      Mat<T> gu = conv_backward(p, layout_.up[l], cache.up[l], gcat.topRows(wu), true, grad, true);
      g = upsample2x_adjoint<T>(gu, hl / 2, wl / 2);
    }
    for (int l = levels; l >= 1; --l) {
      if (l < levels) g += skip_grad[l];
      Mat<T> gd = block_backward(p, layout_.enc[l], cache.enc[l], std::move(g), grad, true);
      g = conv_backward(p, layout_.down[l - 1], cache.down[l - 1], std::move(gd), true, grad, true);
    }
    g += skip_grad[0];
    block_backward(p, layout_.enc[0], cache.enc[0], std::move(g), grad, false);
  }

 private:
  // Output rows per chunk so that one column buffer stays around 1 MB.
  static int chunk_rows(Eigen::Index col_rows, int wo) {
    const Eigen::Index budget = Eigen::Index{1} << 18;  // elements
    return static_cast<int>(std::max<Eigen::Index>(1, budget / std::max<Eigen::Index>(1, col_rows * wo)));
  }

  void activate(Mat<T>& m, bool leaky) const {
    if (!leaky) return;
    const T slope = static_cast<T>(layout_.config.leaky_slope);
    m = m.unaryExpr([slope](T v) { return v > T(0) ? v : v * slope; });
  }

  void activate_grad(const Mat<T>& out, Mat<T>& g, bool leaky) const {
    if (!leaky) return;
    const T slope = static_cast<T>(layout_.config.leaky_slope);
    g = g.binaryExpr(out, [slope](T gv, T ov) { return ov > T(0) ? gv : gv * slope; });
  }

  static int tap_count(int k) { return k * k; }

  /// Weights as cout x (taps * cin) in ring-tap order.
  Mat<T> packed_weight(std::span<const T> p, const ConvSpec& s) const {
    const int nt = tap_count(s.k), pad = (s.k - 1) / 2;
    Mat<T> W(s.cout, static_cast<Eigen::Index>(nt) * s.cin);
    const T* src = p.data() + s.w_off;
    for (int o = 0; o < s.cout; ++o)
      for (int t = 0; t < nt; ++t)
        for (int c = 0; c < s.cin; ++c)
          W(o, t * s.cin + c) =
              src[((static_cast<std::size_t>(o) * s.cin + c) * s.k + taps_[t].dy + pad) * s.k + taps_[t].dx + pad];
    return W;
  }

  void unpack_add(const Mat<T>& gW, const ConvSpec& s, std::span<T> grad) const {
    const int nt = tap_count(s.k), pad = (s.k - 1) / 2;
    T* dst = grad.data() + s.w_off;
    for (int o = 0; o < s.cout; ++o)
      for (int t = 0; t < nt; ++t)
        for (int c = 0; c < s.cin; ++c)
          dst[((static_cast<std::size_t>(o) * s.cin + c) * s.k + taps_[t].dy + pad) * s.k + taps_[t].dx + pad] +=
              gW(o, t * s.cin + c);
  }

  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bias(std::span<const T> p, const ConvSpec& s) const {
    return {p.data() + s.b_off, s.cout};
  }

  Mat<T> conv_forward(std::span<const T> p, const ConvSpec& s, Mat<T> in, int h, int w, bool leaky,
                      ConvCache* cache) const {
    const int ho = s.stride == 1 ? h : h / s.stride;
    const int wo = s.stride == 1 ? w : w / s.stride;
    const Mat<T> W = packed_weight(p, s);
    Mat<T> out(s.cout, static_cast<Eigen::Index>(ho) * wo);
    Mat<T> col;
    const int step = chunk_rows(W.cols(), wo);
    for (int oy = 0; oy < ho; oy += step) {
      const int oy1 = std::min(ho, oy + step);
      im2col<T>(in, h, w, taps_, tap_count(s.k), s.stride, oy, oy1, wo, col);
      out.middleCols(static_cast<Eigen::Index>(oy) * wo, col.cols()).noalias() = W * col;
    }
    out.colwise() += bias(p, s);
    activate(out, leaky);
    if (cache) {
      cache->h_in = h;
      cache->w_in = w;
      cache->h_out = ho;
      cache->w_out = wo;
      cache->in = std::move(in);
      cache->out = out;
    }
    return out;
  }

  /// Returns d/d(input) when `need_input_grad`.
  Mat<T> conv_backward(std::span<const T> p, const ConvSpec& s, const ConvCache& c, Mat<T> g, bool leaky,
                       std::span<T> grad, bool need_input_grad) const {
    activate_grad(c.out, g, leaky);
    const Mat<T> W = packed_weight(p, s);
    Mat<T> gW = Mat<T>::Zero(W.rows(), W.cols());
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> gb(grad.data() + s.b_off, s.cout);
    gb += g.rowwise().sum();
    Mat<T> gin;
    if (need_input_grad) gin.setZero(s.cin, static_cast<Eigen::Index>(c.h_in) * c.w_in);
    const int nt = tap_count(s.k);
    Mat<T> col, gcol;
    const int step = chunk_rows(W.cols(), c.w_out);
    for (int oy = 0; oy < c.h_out; oy += step) {
      const int oy1 = std::min(c.h_out, oy + step);
      im2col<T>(c.in, c.h_in, c.w_in, taps_, nt, s.stride, oy, oy1, c.w_out, col);
      const auto gs = g.middleCols(static_cast<Eigen::Index>(oy) * c.w_out, col.cols());
      gW.noalias() += gs * col.transpose();
      if (need_input_grad) {
        gcol.noalias() = W.transpose() * gs;
        col2im_add<T>(gcol, taps_, nt, s.stride, oy, oy1, c.w_out, c.h_in, c.w_in, gin);
      }
    }
    unpack_add(gW, s, grad);
    return gin;
  }

  Mat<T> block_forward(std::span<const T> p, const BlockSpec& b, Mat<T> in, int h, int w, BlockCache* cache) const {
    const Eigen::Index n = static_cast<Eigen::Index>(h) * w;
    const Eigen::Index cin = b.cin();
    const Eigen::Index r1 = b.b1.cout, r3 = b.b3.cout, r5 = b.b5.cout;
    const Mat<T> W1 = packed_weight(p, b.b1), W3 = packed_weight(p, b.b3), W5 = packed_weight(p, b.b5);
    Mat<T> out(b.width(), n);
    Mat<T> col;
    const int step = chunk_rows(25 * cin, w);
    for (int oy = 0; oy < h; oy += step) {
      const int oy1 = std::min(h, oy + step);
      im2col<T>(in, h, w, taps_, 25, 1, oy, oy1, w, col);
      const Eigen::Index c0 = static_cast<Eigen::Index>(oy) * w, nc = col.cols();
      out.block(0, c0, r1, nc).noalias() = W1 * col.topRows(cin);
      out.block(r1, c0, r3, nc).noalias() = W3 * col.topRows(9 * cin);
      out.block(r1 + r3, c0, r5, nc).noalias() = W5 * col;
    }
    out.topRows(r1).colwise() += bias(p, b.b1);
    out.middleRows(r1, r3).colwise() += bias(p, b.b3);
    out.bottomRows(r5).colwise() += bias(p, b.b5);
    activate(out, true);
    if (cache) {
      cache->h = h;
      cache->w = w;
      cache->in = std::move(in);
      cache->out = out;
    }
    return out;
  }

  Mat<T> block_backward(std::span<const T> p, const BlockSpec& b, const BlockCache& c, Mat<T> g,
                        std::span<T> grad, bool need_input_grad) const {
    activate_grad(c.out, g, true);
    const Eigen::Index cin = b.cin();
    const Eigen::Index r1 = b.b1.cout, r3 = b.b3.cout, r5 = b.b5.cout;
    const Mat<T> W1 = packed_weight(p, b.b1), W3 = packed_weight(p, b.b3), W5 = packed_weight(p, b.b5);
    Mat<T> gW1 = Mat<T>::Zero(W1.rows(), W1.cols());
    Mat<T> gW3 = Mat<T>::Zero(W3.rows(), W3.cols());
    Mat<T> gW5 = Mat<T>::Zero(W5.rows(), W5.cols());
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(grad.data() + b.b1.b_off, r1) += g.topRows(r1).rowwise().sum();
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(grad.data() + b.b3.b_off, r3) +=
        g.middleRows(r1, r3).rowwise().sum();
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(grad.data() + b.b5.b_off, r5) += g.bottomRows(r5).rowwise().sum();
    Mat<T> gin;
    if (need_input_grad) gin.setZero(cin, static_cast<Eigen::Index>(c.h) * c.w);
    Mat<T> col, gcol;
    const int step = chunk_rows(25 * cin, c.w);
    for (int oy = 0; oy < c.h; oy += step) {
      const int oy1 = std::min(c.h, oy + step);
      im2col<T>(c.in, c.h, c.w, taps_, 25, 1, oy, oy1, c.w, col);
      const Eigen::Index c0 = static_cast<Eigen::Index>(oy) * c.w, nc = col.cols();
      const auto g1 = g.block(0, c0, r1, nc);
      const auto g3 = g.block(r1, c0, r3, nc);
      const auto g5 = g.block(r1 + r3, c0, r5, nc);
      gW1.noalias() += g1 * col.topRows(cin).transpose();
      gW3.noalias() += g3 * col.topRows(9 * cin).transpose();
      gW5.noalias() += g5 * col.transpose();
      if (need_input_grad) {
        gcol.noalias() = W5.transpose() * g5;
        gcol.topRows(9 * cin).noalias() += W3.transpose() * g3;
        gcol.topRows(cin).noalias() += W1.transpose() * g1;
        col2im_add<T>(gcol, taps_, 25, 1, oy, oy1, c.w, c.h, c.w, gin);
      }
    }
    unpack_add(gW1, b.b1, grad);
    unpack_add(gW3, b.b3, grad);
    unpack_add(gW5, b.b5, grad);
    return gin;
  }

  NetLayout layout_;
  std::vector<Tap> taps_;
};

}  // namespace photocon::detail
