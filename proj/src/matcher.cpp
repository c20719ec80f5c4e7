#include "photocon/matcher.hpp"

#include <fftw3.h>

#include <cmath>
#include <memory>
#include <mutex>

#include "photocon/error.hpp"
#include "photocon/inference.hpp"
#include "photocon/parallel.hpp"
#include "photocon/random.hpp"

namespace photocon {

namespace {

void check_inputs(const ImageTensor& target, const ImageTensor& templ) {
  if (target.empty() || templ.empty()) throw GeometryError("ncc_match: empty image");
  if (target.channels() != templ.channels())
    throw GeometryError("ncc_match: channel mismatch (" + std::to_string(target.channels()) + " vs " +
                        std::to_string(templ.channels()) + ")");
  if (templ.height() > target.height() || templ.width() > target.width())
    throw GeometryError("ncc_match: template " + std::to_string(templ.height()) + "x" + std::to_string(templ.width()) +
                        " larger than target " + std::to_string(target.height()) + "x" +
                        std::to_string(target.width()));
}

double mean_of(const ImageTensor& img) {
  double s = 0.0;
  for (float v : img.data()) s += v;
  return s / static_cast<double>(img.size());
}

// Windows whose centered energy is below this fraction of their (globally
// centered) energy, or of the image's mean energy, count as constant.
constexpr double kFlat = 1e-12;

double finish(double num, double t_energy, double w_var, double w_energy, double floor_energy) {
  if (!(w_var > kFlat * std::max(w_energy, floor_energy))) return 0.0;
  return num / std::sqrt(t_energy * w_var);
}

struct Centered {
  std::vector<double> values;  // template minus its mean, interleaved
  double energy = 0.0;
  double raw_energy = 0.0;

  bool flat() const noexcept { return !(energy > kFlat * raw_energy); }
};

Centered center_template(const ImageTensor& templ) {
  const double m = mean_of(templ);
  Centered c;
  c.values.reserve(templ.size());
  for (float v : templ.data()) {
    c.values.push_back(v - m);
    c.energy += (v - m) * (v - m);
    c.raw_energy += static_cast<double>(v) * v;
  }
  return c;
}

MatchResult naive(const ImageTensor& target, const ImageTensor& templ) {
  const int th = templ.height(), tw = templ.width(), ch = templ.channels();
  const int oh = target.height() - th + 1, ow = target.width() - tw + 1;
  const Centered t = center_template(templ);
  const double gmean = mean_of(target);
  double genergy = 0.0;
  for (float v : target.data()) genergy += (v - gmean) * (v - gmean);
  const double n = static_cast<double>(templ.size());
  const double floor_energy = n * genergy / static_cast<double>(target.size());
  MatchResult r;
  r.heatmap = {oh, ow, std::vector<double>(static_cast<std::size_t>(oh) * ow, 0.0)};
  if (t.flat()) return r;
  for (int v = 0; v < oh; ++v)
    for (int u = 0; u < ow; ++u) {
      double s = 0.0;
      for (int y = 0; y < th; ++y)
        for (int x = 0; x < tw; ++x)
          for (int c = 0; c < ch; ++c) s += target.at(v + y, u + x, c);
      const double m = s / n;
      double num = 0.0, var = 0.0, energy = 0.0;
      std::size_t k = 0;
      for (int y = 0; y < th; ++y)
        for (int x = 0; x < tw; ++x)
          for (int c = 0; c < ch; ++c, ++k) {
            const double w = target.at(v + y, u + x, c);
            num += t.values[k] * w;
            var += (w - m) * (w - m);
            energy += (w - gmean) * (w - gmean);
          }
      r.heatmap.values[static_cast<std::size_t>(v) * ow + u] = finish(num, t.energy, var, energy, floor_energy);
    }
  return r;
}

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const noexcept { fftw_free(p); }
};
using RealBuf = std::unique_ptr<double[], FftwFree>;
using CplxBuf = std::unique_ptr<fftw_complex[], FftwFree>;

MatchResult fft(const ImageTensor& target, const ImageTensor& templ) {
  const int H = target.height(), W = target.width(), ch = target.channels();
  const int th = templ.height(), tw = templ.width();
  const int oh = H - th + 1, ow = W - tw + 1;
  const int wc = W / 2 + 1;
  const std::size_t nr = static_cast<std::size_t>(H) * W, nc = static_cast<std::size_t>(H) * wc;
  const Centered t = center_template(templ);
  const double gmean = mean_of(target);
  const double n = static_cast<double>(templ.size());

  MatchResult r;
  r.heatmap = {oh, ow, std::vector<double>(static_cast<std::size_t>(oh) * ow, 0.0)};
  if (t.flat()) return r;

  RealBuf real(fftw_alloc_real(nr));
  CplxBuf spec(fftw_alloc_complex(nc)), acc(fftw_alloc_complex(nc)), tspec(fftw_alloc_complex(nc));
  fftw_plan fwd, fwd_t, inv;
  {
    std::lock_guard lock(fftw_planner_mutex());
    fwd = fftw_plan_dft_r2c_2d(H, W, real.get(), spec.get(), FFTW_ESTIMATE);
    fwd_t = fftw_plan_dft_r2c_2d(H, W, real.get(), tspec.get(), FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r_2d(H, W, acc.get(), real.get(), FFTW_ESTIMATE);
  }
  for (std::size_t i = 0; i < nc; ++i) acc[i][0] = acc[i][1] = 0.0;

  // Integral images of the centered target, pooled over channels.
  const int iw = W + 1;
  std::vector<double> s1(static_cast<std::size_t>(H + 1) * iw, 0.0), s2(s1.size(), 0.0);
  double genergy = 0.0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double a = 0.0, b = 0.0;
      for (int c = 0; c < ch; ++c) {
        const double v = target.at(y, x, c) - gmean;
        a += v;
        b += v * v;
      }
      genergy += b;
      const std::size_t i = static_cast<std::size_t>(y + 1) * iw + x + 1;
      s1[i] = a + s1[i - 1] + s1[i - iw] - s1[i - iw - 1];
      s2[i] = b + s2[i - 1] + s2[i - iw] - s2[i - iw - 1];
    }

  for (int c = 0; c < ch; ++c) {
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) real[static_cast<std::size_t>(y) * W + x] = target.at(y, x, c) - gmean;
    fftw_execute(fwd);
    std::fill(real.get(), real.get() + nr, 0.0);
    for (int y = 0; y < th; ++y)
      for (int x = 0; x < tw; ++x)
        real[static_cast<std::size_t>(y) * W + x] = t.values[(static_cast<std::size_t>(y) * tw + x) * ch + c];
    fftw_execute(fwd_t);
    for (std::size_t i = 0; i < nc; ++i) {
      // acc += conj(T) * X
      const double tr = tspec[i][0], ti = -tspec[i][1];
      acc[i][0] += tr * spec[i][0] - ti * spec[i][1];
      acc[i][1] += tr * spec[i][1] + ti * spec[i][0];
    }
  }
  fftw_execute(inv);
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(fwd_t);
    fftw_destroy_plan(inv);
  }

  const double scale = 1.0 / static_cast<double>(nr);
  const double floor_energy = n * genergy / static_cast<double>(target.size());
  auto box_sum = [&](const std::vector<double>& s, int y, int x) {
    const std::size_t a = static_cast<std::size_t>(y) * iw + x, b = static_cast<std::size_t>(y + th) * iw + x;
    return s[b + tw] - s[b] - s[a + tw] + s[a];
  };
  for (int v = 0; v < oh; ++v)
    for (int u = 0; u < ow; ++u) {
      const double sum = box_sum(s1, v, u), energy = box_sum(s2, v, u);
      const double var = energy - sum * sum / n;
      const double num = real[static_cast<std::size_t>(v) * W + u] * scale;
      r.heatmap.values[static_cast<std::size_t>(v) * ow + u] = finish(num, t.energy, var, energy, floor_energy);
    }
  return r;
}

}  // namespace

BoundingBox heatmap_argmax(const Heatmap& map, int side, double* score) {
  if (map.values.empty()) throw GeometryError("heatmap is empty");
  std::size_t best = 0;
  for (std::size_t i = 1; i < map.values.size(); ++i)
    if (map.values[i] > map.values[best]) best = i;
  if (score) *score = map.values[best];
  return {static_cast<int>(best % map.width), static_cast<int>(best / map.width), side};
}

MatchResult ncc_match(const ImageTensor& target, const ImageTensor& templ, MatchMethod method) {
  check_inputs(target, templ);
  MatchResult r = method == MatchMethod::kNaive ? naive(target, templ) : fft(target, templ);
  r.best_box = heatmap_argmax(r.heatmap, templ.height(), &r.score);
  return r;
}

RocCurve auc_from_ious(const std::vector<double>& ious, double step) {
  if (ious.empty()) throw UsageError("auc_from_ious: no IoU values");
  if (!(step > 0.0 && step <= 1.0)) throw UsageError("auc_from_ious: grid step must lie in (0, 1]");
  for (double v : ious)
    if (!(v >= 0.0 && v <= 1.0)) throw UsageError("auc_from_ious: IoU outside [0, 1]");
  const int n = static_cast<int>(std::lround(1.0 / step));
  RocCurve roc;
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    // Tolerate IoUs a rounding error below a grid point (e.g. 0.5 from 64/128).
    const auto hits = std::count_if(ious.begin(), ious.end(), [t](double v) { return v >= t - 1e-12; });
    roc.thresholds.push_back(t);
    roc.success.push_back(static_cast<double>(hits) / static_cast<double>(ious.size()));
  }
  for (int i = 0; i < n; ++i)
    roc.auc += 0.5 * (roc.success[i] + roc.success[i + 1]) * (roc.thresholds[i + 1] - roc.thresholds[i]);
  return roc;
}

namespace {

ImageTensor representation_for(const ImageTensor& img, const ModelWeights* weights) {
  if (!weights) return quantize_image(img);
  return normalize_to_8bit(forward(*weights, img)).image;
}

bool box_in_mask(const SceneSet& scene, const BoundingBox& box) {
  if (!scene.has_masks()) return true;
  const Mask& m = scene.masks[0];
  for (int y = box.y; y < box.y + box.side; ++y)
    for (int x = box.x; x < box.x + box.side; ++x)
      if (!m.at(y, x)) return false;
  return true;
}

}  // namespace

MatchBenchReport run_match_benchmark(const std::vector<SceneSet>& scenes, const ModelWeights* weights,
                                     const MatchBenchConfig& config) {
  if (config.patch_sizes.empty() || config.patches_per_scene < 1 || config.max_attempts < 1)
    throw UsageError("match benchmark needs patch sizes, patches_per_scene >= 1 and max_attempts >= 1");
  for (const auto& s : scenes) {
    s.validate();
    if (s.instances.size() < 2) throw DataError("scene '" + s.scene_id + "' needs at least two instances");
  }
  MatchBenchReport rep;
  rep.config = config;
  rep.transformed = weights != nullptr;

  // Representations of each scene's reference and target.
  const int ns = static_cast<int>(scenes.size());
  std::vector<ImageTensor> ref(ns), tgt(ns);
  parallel_for(ns, config.threads, [&](int i) {
    ref[i] = representation_for(scenes[i].instances[0], weights);
    tgt[i] = representation_for(scenes[i].instances[1], weights);
  });

  struct Job {
    int scene;
    int size;
    BoundingBox box;
  };
  std::vector<Job> jobs;
  for (auto& size : config.patch_sizes) rep.sizes.push_back({size, 0, 0, {}});
  for (int i = 0; i < ns; ++i) {
    const ImageTensor& raw = scenes[i].instances[0];
    for (std::size_t si = 0; si < config.patch_sizes.size(); ++si) {
      const int s = config.patch_sizes[si];
      std::vector<BoundingBox> boxes;
      if (s >= 1 && s <= raw.height() && s <= raw.width()) {
        Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(s)));
        for (int p = 0; p < config.patches_per_scene; ++p) {
          bool found = false;
          for (int a = 0; a < config.max_attempts && !found; ++a) {
            const BoundingBox box{uniform_int(rng, 0, raw.width() - s), uniform_int(rng, 0, raw.height() - s), s};
            if (box_in_mask(scenes[i], box) && stddev(crop(raw, box)) >= config.sigma_min) {
              boxes.push_back(box);
              found = true;
            }
          }
          if (!found) break;
        }
      }
      if (static_cast<int>(boxes.size()) < config.patches_per_scene) {
        rep.sizes[si].skipped += config.patches_per_scene;
        rep.skipped += config.patches_per_scene;
        continue;
      }
      for (const auto& b : boxes) jobs.push_back({i, s, b});
    }
  }

  rep.trials.resize(jobs.size());
  parallel_for(static_cast<int>(jobs.size()), config.threads, [&](int j) {
    const Job& job = jobs[j];
    const auto m = ncc_match(tgt[job.scene], crop(ref[job.scene], job.box), config.method);
    rep.trials[j] = {scenes[job.scene].scene_id, job.size, job.box, m.best_box, m.score, iou(job.box, m.best_box)};
  });

  std::vector<double> all;
  for (auto& summary : rep.sizes) {
    std::vector<double> ious;
    for (const auto& t : rep.trials)
      if (t.patch_size == summary.patch_size) ious.push_back(t.iou);
    summary.trials = static_cast<int>(ious.size());
    if (!ious.empty()) summary.roc = auc_from_ious(ious);
    all.insert(all.end(), ious.begin(), ious.end());
  }
  if (!all.empty()) rep.overall = auc_from_ious(all);
  return rep;
}

ImageTensor heatmap_image(const Heatmap& map) {
  ImageTensor img(map.height, map.width, 1);
  for (std::size_t i = 0; i < map.values.size(); ++i)
    img.data()[i] = static_cast<float>(std::clamp(0.5 * (map.values[i] + 1.0), 0.0, 1.0));
  return img;
}

}  // namespace photocon
