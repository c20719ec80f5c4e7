#include "photocon/registration.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include "photocon/error.hpp"
#include "photocon/inference.hpp"
#include "photocon/parallel.hpp"
#include "photocon/random.hpp"

namespace photocon {

AffineWarp compose(const AffineWarp& w1, const AffineWarp& w2) {
  const auto& p = w1.m;
  const auto& q = w2.m;
  return {{p[0] * q[0] + p[1] * q[3], p[0] * q[1] + p[1] * q[4], p[0] * q[2] + p[1] * q[5] + p[2],
           p[3] * q[0] + p[4] * q[3], p[3] * q[1] + p[4] * q[4], p[3] * q[2] + p[4] * q[5] + p[5]}};
}

AffineWarp invert(const AffineWarp& w) {
  const double det = w.det();
  const double scale = std::max({std::abs(w.a()), std::abs(w.b()), std::abs(w.c()), std::abs(w.d())});
  if (!std::isfinite(det) || std::abs(det) <= 1e-12 * scale * scale || scale == 0.0)
    throw GeometryError("affine warp is singular (det = " + std::to_string(det) + ")");
  const double a = w.d() / det, b = -w.b() / det, c = -w.c() / det, d = w.a() / det;
  return {{a, b, -(a * w.tx() + b * w.ty()), c, d, -(c * w.tx() + d * w.ty())}};
}

AffineWarp rotation_about_center(double degrees, int height, int width, double tx, double ty) {
  double cs, sn;
  const double q = degrees / 90.0;
  if (q == std::round(q)) {
    const int k = ((static_cast<int>(std::lround(q)) % 4) + 4) % 4;
    const double cos_k[] = {1.0, 0.0, -1.0, 0.0}, sin_k[] = {0.0, 1.0, 0.0, -1.0};
    cs = cos_k[k];
    sn = sin_k[k];
  } else {
    const double r = degrees * std::numbers::pi / 180.0;
    cs = std::cos(r);
    sn = std::sin(r);
  }
  const double cx = 0.5 * (width - 1), cy = 0.5 * (height - 1);
  // y points down, so a counter-clockwise turn on screen is (x, y) -> (c x + s y, -s x + c y).
  return {{cs, sn, cx - cs * cx - sn * cy + tx, -sn, cs, cy + sn * cx - cs * cy + ty}};
}

namespace {

constexpr double kInside = 1e-9;

struct Bilinear {
  int x0, y0, x1, y1;
  double fx, fy;
};

// Source point -> taps, or nullopt when outside [0, w-1] x [0, h-1].
std::optional<Bilinear> taps_at(double sx, double sy, int h, int w) {
  if (!(sx >= -kInside && sx <= w - 1 + kInside && sy >= -kInside && sy <= h - 1 + kInside)) return std::nullopt;
  sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
  sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
  Bilinear t;
  t.x0 = static_cast<int>(std::floor(sx));
  t.y0 = static_cast<int>(std::floor(sy));
  t.fx = sx - t.x0;
  t.fy = sy - t.y0;
  t.x1 = std::min(t.x0 + 1, w - 1);
  t.y1 = std::min(t.y0 + 1, h - 1);
  return t;
}

bool taps_valid(const Bilinear& t, const Mask& m) {
  if (!m.at(t.y0, t.x0)) return false;
  if (t.fx > 0.0 && !m.at(t.y0, t.x1)) return false;
  if (t.fy > 0.0 && !m.at(t.y1, t.x0)) return false;
  if (t.fx > 0.0 && t.fy > 0.0 && !m.at(t.y1, t.x1)) return false;
  return true;
}

}  // namespace

WarpResult warp_image(const ImageTensor& img, const AffineWarp& warp, int out_height, int out_width,
                      const Mask* input_valid) {
  if (img.empty() || out_height < 1 || out_width < 1) throw GeometryError("warp_image: empty image or output");
  if (input_valid && (input_valid->height != img.height() || input_valid->width != img.width()))
    throw GeometryError("warp_image: mask size differs from the image");
  const AffineWarp inv = invert(warp);
  const int h = img.height(), w = img.width(), ch = img.channels();
  WarpResult r{ImageTensor(out_height, out_width, ch),
               Mask{out_height, out_width, std::vector<unsigned char>(static_cast<std::size_t>(out_height) * out_width, 0)}};
  if (warp.is_identity() && out_height == h && out_width == w) {
    r.image = img;
    r.valid = input_valid ? *input_valid : Mask{h, w, std::vector<unsigned char>(img.pixels(), 1)};
    if (input_valid)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if (!input_valid->at(y, x))
            for (int c = 0; c < ch; ++c) r.image.at(y, x, c) = 0.0f;
    return r;
  }
  for (int y = 0; y < out_height; ++y)
    for (int x = 0; x < out_width; ++x) {
      double sx, sy;
      inv.apply(x, y, sx, sy);
      const auto t = taps_at(sx, sy, h, w);
      if (!t || (input_valid && !taps_valid(*t, *input_valid))) continue;
      r.valid.bits[static_cast<std::size_t>(y) * out_width + x] = 1;
      for (int c = 0; c < ch; ++c) {
        const double v = (1.0 - t->fx) * (1.0 - t->fy) * img.at(t->y0, t->x0, c) +
                         t->fx * (1.0 - t->fy) * img.at(t->y0, t->x1, c) +
                         (1.0 - t->fx) * t->fy * img.at(t->y1, t->x0, c) + t->fx * t->fy * img.at(t->y1, t->x1, c);
        r.image.at(y, x, c) = static_cast<float>(v);
      }
    }
  return r;
}

void EccConfig::validate() const {
  if (max_iterations < 1 || !(epsilon > 0.0) || pyramid_levels < 1)
    throw UsageError("ECC needs max_iterations >= 1, epsilon > 0 and pyramid_levels >= 1");
}

namespace {

struct Gray {
  int h = 0, w = 0;
  std::vector<double> v;
  double at(int y, int x) const noexcept { return v[static_cast<std::size_t>(y) * w + x]; }
  double& at(int y, int x) noexcept { return v[static_cast<std::size_t>(y) * w + x]; }
};

Gray to_gray(const ImageTensor& img) {
  const ImageTensor l = luma(img);
  Gray g{l.height(), l.width(), std::vector<double>(l.data().begin(), l.data().end())};
  return g;
}

int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
  return i;
}

// Separable [1 4 6 4 1] / 16.
Gray blur5(const Gray& in) {
  static constexpr double k[5] = {1 / 16.0, 4 / 16.0, 6 / 16.0, 4 / 16.0, 1 / 16.0};
  Gray tmp{in.h, in.w, std::vector<double>(in.v.size())}, out = tmp;
  for (int y = 0; y < in.h; ++y)
    for (int x = 0; x < in.w; ++x) {
      double s = 0.0;
      for (int i = -2; i <= 2; ++i) s += k[i + 2] * in.at(y, reflect101(x + i, in.w));
      tmp.at(y, x) = s;
    }
  for (int y = 0; y < in.h; ++y)
    for (int x = 0; x < in.w; ++x) {
      double s = 0.0;
      for (int i = -2; i <= 2; ++i) s += k[i + 2] * tmp.at(reflect101(y + i, in.h), x);
      out.at(y, x) = s;
    }
  return out;
}

Gray pyr_down(const Gray& in) {
  const Gray b = blur5(in);
  Gray out{(in.h + 1) / 2, (in.w + 1) / 2, {}};
  out.v.resize(static_cast<std::size_t>(out.h) * out.w);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x) out.at(y, x) = b.at(2 * y, 2 * x);
  return out;
}

// Pixels whose 5x5 neighborhood (the blur footprint) is entirely valid,
// sampled every `step` pixels.
Mask erode5(const Mask& in, int step) {
  Mask out{(in.height + step - 1) / step, (in.width + step - 1) / step, {}};
  out.bits.assign(static_cast<std::size_t>(out.height) * out.width, 0);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      bool ok = true;
      for (int dy = -2; dy <= 2 && ok; ++dy)
        for (int dx = -2; dx <= 2 && ok; ++dx) {
          const int fy = std::clamp(step * y + dy, 0, in.height - 1), fx = std::clamp(step * x + dx, 0, in.width - 1);
          ok = in.at(fy, fx);
        }
      out.bits[static_cast<std::size_t>(y) * out.width + x] = ok ? 1 : 0;
    }
  return out;
}

void gradients(const Gray& g, Gray& gx, Gray& gy) {
  gx = {g.h, g.w, std::vector<double>(g.v.size())};
  gy = gx;
  for (int y = 0; y < g.h; ++y)
    for (int x = 0; x < g.w; ++x) {
      const int xl = std::max(x - 1, 0), xr = std::min(x + 1, g.w - 1);
      const int yu = std::max(y - 1, 0), yd = std::min(y + 1, g.h - 1);
      gx.at(y, x) = xr > xl ? (g.at(y, xr) - g.at(y, xl)) / (xr - xl) : 0.0;
      gy.at(y, x) = yd > yu ? (g.at(yd, x) - g.at(yu, x)) / (yd - yu) : 0.0;
    }
}

double sample(const Gray& g, const Bilinear& t) {
  return (1.0 - t.fx) * (1.0 - t.fy) * g.at(t.y0, t.x0) + t.fx * (1.0 - t.fy) * g.at(t.y0, t.x1) +
         (1.0 - t.fx) * t.fy * g.at(t.y1, t.x0) + t.fx * t.fy * g.at(t.y1, t.x1);
}

using Vec6 = std::array<double, 6>;
using Mat6 = std::array<Vec6, 6>;

double dot6(const Vec6& a, const Vec6& b) {
  double s = 0.0;
  for (int i = 0; i < 6; ++i) s += a[i] * b[i];
  return s;
}

// In-place lower Cholesky factor of a symmetric matrix given by its lower
// triangle. Plain scalar loops keep the result independent of where the
// matrix sits in memory.
bool cholesky6(Mat6& a) {
  for (int j = 0; j < 6; ++j) {
    double d = a[j][j];
    for (int k = 0; k < j; ++k) d -= a[j][k] * a[j][k];
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    a[j][j] = std::sqrt(d);
    for (int i = j + 1; i < 6; ++i) {
      double v = a[i][j];
      for (int k = 0; k < j; ++k) v -= a[i][k] * a[j][k];
      a[i][j] = v / a[j][j];
    }
  }
  return true;
}

Vec6 cholesky6_solve(const Mat6& l, const Vec6& b) {
  Vec6 y{}, x{};
  for (int i = 0; i < 6; ++i) {
    double v = b[i];
    for (int k = 0; k < i; ++k) v -= l[i][k] * y[k];
    y[i] = v / l[i][i];
  }
  for (int i = 5; i >= 0; --i) {
    double v = y[i];
    for (int k = i + 1; k < 6; ++k) v -= l[k][i] * x[k];
    x[i] = v / l[i][i];
  }
  return x;
}

constexpr int kEdge = 5;

struct LevelOutcome {
  double rho = 0.0;
  int iterations = 0;
};

// Maximizes the coefficient over `warp` (template coords -> input coords).
LevelOutcome ecc_level(const Gray& tmpl, const Gray& input, const Mask* input_valid, AffineWarp& warp,
                       const EccConfig& cfg, int level) {
  Gray gx, gy;
  gradients(input, gx, gy);
  const std::size_t n = tmpl.v.size();
  std::vector<double> t(n), iw(n), wx(n), wy(n);
  std::vector<int> px(n), py(n);

  AffineWarp prev = warp;
  double prev_rho = -2.0;
  LevelOutcome out;
  for (int it = 0;; ++it) {
    // Warp the input and its gradients onto the template grid.
    // Pixels near either image edge are skipped: the blur there saw
    // mirrored samples, and the gradient is one-sided.
    std::size_t k = 0;
    for (int y = kEdge; y < tmpl.h - kEdge; ++y)
      for (int x = kEdge; x < tmpl.w - kEdge; ++x) {
        double sx, sy;
        warp.apply(x, y, sx, sy);
        if (!(sx >= kEdge && sx <= input.w - 1 - kEdge && sy >= kEdge && sy <= input.h - 1 - kEdge)) continue;
        const auto tp = taps_at(sx, sy, input.h, input.w);
        if (!tp || (input_valid && !taps_valid(*tp, *input_valid))) continue;
        t[k] = tmpl.at(y, x);
        iw[k] = sample(input, *tp);
        wx[k] = sample(gx, *tp);
        wy[k] = sample(gy, *tp);
        px[k] = x;
        py[k] = y;
        ++k;
      }
    const std::string where = " (level " + std::to_string(level) + ", iteration " + std::to_string(it) + ")";
    if (k < 16) throw NumericError("ECC: warped images no longer overlap" + where);
    double mt = 0.0, mi = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      mt += t[i];
      mi += iw[i];
    }
    mt /= static_cast<double>(k);
    mi /= static_cast<double>(k);
    double tt = 0.0, ii = 0.0, ti = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      t[i] -= mt;
      iw[i] -= mi;
      tt += t[i] * t[i];
      ii += iw[i] * iw[i];
      ti += t[i] * iw[i];
    }
    if (!(tt > 0.0) || !(ii > 0.0)) throw NumericError("ECC: an image has no contrast on the overlap" + where);
    const double rho = ti / std::sqrt(tt * ii);

    if (it > 0) {
      if (rho < prev_rho) {
        warp = prev;
        out.rho = prev_rho;
        return out;
      }
      if (rho - prev_rho < cfg.epsilon) break;
    }
    out.rho = rho;
    if (rho >= 1.0 - 1e-12 || it == cfg.max_iterations) break;

    // Closed-form increment for the affine Jacobian
    // [x gx, x gy, y gx, y gy, gx, gy].
    Mat6 H{};
    Vec6 pi{}, pt{};
    for (std::size_t i = 0; i < k; ++i) {
      const Vec6 g{px[i] * wx[i], px[i] * wy[i], py[i] * wx[i], py[i] * wy[i], wx[i], wy[i]};
      for (int r = 0; r < 6; ++r) {
        for (int c = 0; c <= r; ++c) H[r][c] += g[r] * g[c];
        pi[r] += g[r] * iw[i];
        pt[r] += g[r] * t[i];
      }
    }
    if (!cholesky6(H)) throw NumericError("ECC: singular Hessian" + where);
    const Vec6 hpi = cholesky6_solve(H, pi);
    const double lambda_n = ii - dot6(pi, hpi);
    const double lambda_d = ti - dot6(pt, hpi);
    if (!(lambda_d > 0.0)) throw NumericError("ECC: correlation cannot be increased, images may be uncorrelated" + where);
    const double lambda = lambda_n / lambda_d;
    Vec6 rhs;
    for (int r = 0; r < 6; ++r) rhs[r] = lambda * pt[r] - pi[r];
    const Vec6 dp = cholesky6_solve(H, rhs);
    for (double v : dp)
      if (!std::isfinite(v)) throw NumericError("ECC: non-finite increment" + where);

    prev = warp;
    prev_rho = rho;
    warp.m[0] += dp[0];
    warp.m[3] += dp[1];
    warp.m[1] += dp[2];
    warp.m[4] += dp[3];
    warp.m[2] += dp[4];
    warp.m[5] += dp[5];
    ++out.iterations;
    invert(warp);  // throws for a degenerate intermediate warp
  }
  return out;
}

}  // namespace

EccResult ecc_align(const ImageTensor& reference, const ImageTensor& moving, const EccConfig& config,
                    const Mask* moving_valid) {
  config.validate();
  for (const auto* img : {&reference, &moving})
    if (img->height() < 32 || img->width() < 32)
      throw GeometryError("ecc_align: images must be at least 32x32, got " + std::to_string(img->height()) + "x" +
                          std::to_string(img->width()));
  if (moving_valid && (moving_valid->height != moving.height() || moving_valid->width != moving.width()))
    throw GeometryError("ecc_align: mask size differs from the moving image");

  std::vector<Gray> tp{to_gray(reference)}, ip{to_gray(moving)};
  std::vector<Mask> mp;
  if (moving_valid) mp.push_back(*moving_valid);
  // Stop coarsening before either image drops below 32 px.
  while (static_cast<int>(tp.size()) < config.pyramid_levels &&
         std::min({tp.back().h, tp.back().w, ip.back().h, ip.back().w}) >= 64) {
    tp.push_back(pyr_down(tp.back()));
    ip.push_back(pyr_down(ip.back()));
    if (moving_valid) mp.push_back(erode5(mp.back(), 2));
  }
  const int levels = static_cast<int>(tp.size());

  AffineWarp w = invert(config.initial);
  const double s = std::ldexp(1.0, -(levels - 1));
  w.m[2] *= s;
  w.m[5] *= s;
  EccResult res;
  for (int l = levels - 1; l >= 0; --l) {
    // Two binomial passes (9 taps) before each level.
    const Mask usable = moving_valid ? erode5(erode5(mp[l], 1), 1) : Mask{};
    const LevelOutcome o =
        ecc_level(blur5(blur5(tp[l])), blur5(blur5(ip[l])), moving_valid ? &usable : nullptr, w, config, l);
    res.coefficient = o.rho;
    res.iterations += o.iterations;
    if (l > 0) {
      w.m[2] *= 2.0;
      w.m[5] *= 2.0;
    }
  }
  res.warp = invert(w);
  return res;
}

RegistrationBenchReport run_registration_benchmark(const std::vector<SceneSet>& scenes, const ModelWeights* weights,
                                                   const RegistrationBenchConfig& config) {
  config.ecc.validate();
  if (config.angles.empty() || !(config.max_translation >= 0.0))
    throw UsageError("registration benchmark needs angles and a nonnegative max_translation");
  for (const auto& s : scenes) {
    s.validate();
    if (s.instances.size() < 2) throw DataError("scene '" + s.scene_id + "' needs at least two instances");
  }
  RegistrationBenchReport rep;
  rep.config = config;
  rep.transformed = weights != nullptr;
  const int na = static_cast<int>(config.angles.size());
  const int n = static_cast<int>(scenes.size()) * na;
  rep.trials.resize(n);

  auto represent = [&](const ImageTensor& img) {
    return weights ? normalize_to_8bit(forward(*weights, img)).image : quantize_image(img);
  };
  std::vector<ImageTensor> refs(scenes.size());
  parallel_for(static_cast<int>(scenes.size()), config.threads,
               [&](int i) { refs[i] = represent(scenes[i].instances[0]); });

  parallel_for(n, config.threads, [&](int j) {
    const int si = j / na, ai = j % na;
    const SceneSet& scene = scenes[si];
    const ImageTensor& target = scene.instances[1];
    RegistrationTrial& tr = rep.trials[j];
    tr.scene = scene.scene_id;
    tr.angle = config.angles[ai];
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(si), static_cast<std::uint64_t>(ai)));
    const double r = config.max_translation * std::sqrt(uniform(rng, 0.0, 1.0));
    const double th = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    tr.applied = rotation_about_center(tr.angle, target.height(), target.width(), r * std::cos(th), r * std::sin(th));
    const int h = target.height(), w = target.width();
    const WarpResult moved = warp_image(target, tr.applied, h, w);
    try {
      const EccResult e = ecc_align(refs[si], represent(moved.image), config.ecc, &moved.valid);
      tr.estimate = e.warp;
      tr.iterations = e.iterations;
      tr.coefficient = e.coefficient;
      const WarpResult restored = warp_image(moved.image, e.warp, h, w, &moved.valid);
      const WarpResult truth = warp_image(moved.image, invert(tr.applied), h, w, &moved.valid);
      Mask both = restored.valid;
      for (std::size_t i = 0; i < both.bits.size(); ++i) both.bits[i] &= truth.valid.bits[i];
      tr.psnr = psnr(restored.image, target, &both);
      tr.psnr_truth = psnr(truth.image, target, &both);
    } catch (const Error& ex) {
      tr.failed = true;
      tr.error = ex.what();
    }
  });

  for (int ai = 0; ai < na; ++ai) {
    RegistrationAngleSummary s{config.angles[ai], 0, 0, 0.0, 0.0};
    int used = 0;
    for (int si = 0; si < static_cast<int>(scenes.size()); ++si) {
      const auto& tr = rep.trials[si * na + ai];
      ++s.trials;
      if (tr.failed) {
        ++s.failures;
        continue;
      }
      if (!std::isfinite(tr.psnr) || !std::isfinite(tr.psnr_truth)) continue;
      s.mean_psnr += tr.psnr;
      s.mean_psnr_truth += tr.psnr_truth;
      ++used;
    }
    if (used > 0) {
      s.mean_psnr /= used;
      s.mean_psnr_truth /= used;
    }
    rep.angles.push_back(s);
  }
  return rep;
}

}  // namespace photocon
