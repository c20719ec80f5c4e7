#include "photocon/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "photocon/binio.hpp"
#include "photocon/error.hpp"
#include "photocon/png_io.hpp"
#include "photocon/random.hpp"

namespace photocon {

namespace fs = std::filesystem;

void SceneSet::validate() const {
  if (instances.size() < 2)
    throw DataError("scene '" + scene_id + "' has " + std::to_string(instances.size()) +
                    " image(s); at least 2 are required");
  const auto& first = instances.front();
  for (const auto& img : instances)
    if (img.height() != first.height() || img.width() != first.width())
      throw DataError("scene '" + scene_id + "': instances differ in size");
  if (!masks.empty()) {
    if (masks.size() != instances.size())
      throw DataError("scene '" + scene_id + "': mask count does not match image count");
    for (const auto& m : masks)
      if (m.height != first.height() || m.width != first.width())
        throw DataError("scene '" + scene_id + "': mask shape does not match images");
  }
}

void IlluminationParams::validate() const {
  for (double g : gain)
    if (!(g > 0.0) || !std::isfinite(g)) throw DataError("illumination gain must be positive");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw DataError("illumination gamma must be positive");
}

IlluminationParams draw_illumination(std::uint64_t seed) {
  Rng rng(seed);
  IlluminationParams p;
  for (double& g : p.gain) g = uniform(rng, 0.4, 1.6);
  p.gamma = uniform(rng, 0.6, 1.6);
  p.shading_seed = rng();
  return p;
}

std::vector<float> shading_field(int height, int width, std::uint64_t seed) {
  Rng rng(seed);
  constexpr double two_pi = 2.0 * std::numbers::pi;
  struct Mode {
    double amp, fx, fy, px, py;
  };
  std::array<Mode, 3> modes{};
  for (auto& m : modes)
    m = {uniform(rng, 0.3, 1.0), uniform(rng, 0.2, 1.5), uniform(rng, 0.2, 1.5), uniform(rng, 0.0, two_pi),
         uniform(rng, 0.0, two_pi)};
  const double gx = uniform(rng, -1.0, 1.0);
  const double gy = uniform(rng, -1.0, 1.0);

  std::vector<double> raw(static_cast<std::size_t>(height) * width);
  for (int y = 0; y < height; ++y) {
    const double v = static_cast<double>(y) / height;
    for (int x = 0; x < width; ++x) {
      const double u = static_cast<double>(x) / width;
      double s = gx * u + gy * v;
      for (const auto& m : modes)
        s += m.amp * std::cos(two_pi * m.fx * u + m.px) * std::cos(two_pi * m.fy * v + m.py);
      raw[static_cast<std::size_t>(y) * width + x] = s;
    }
  }
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  const double range = *hi - *lo;
  std::vector<float> field(raw.size(), 1.0f);
  if (range > 1e-12)
    for (std::size_t i = 0; i < raw.size(); ++i)
      field[i] = static_cast<float>(0.3 + 0.7 * (raw[i] - *lo) / range);
  return field;
}

ImageTensor synth_relight(const ImageTensor& base, const IlluminationParams& params) {
  params.validate();
  if (base.channels() != 3)
    throw DataError("synth_relight expects a 3-channel base image, got " + std::to_string(base.channels()));
  std::vector<float> shade;
  if (params.shading_seed) shade = shading_field(base.height(), base.width(), *params.shading_seed);
  ImageTensor out(base.height(), base.width(), 3);
  for (std::size_t p = 0; p < base.pixels(); ++p) {
    const double s = shade.empty() ? 1.0 : shade[p];
    for (int c = 0; c < 3; ++c) {
      const double b = std::clamp(static_cast<double>(base.data()[p * 3 + c]), 0.0, 1.0);
      const double g = params.gamma == 1.0 ? b : std::pow(b, params.gamma);
      out.data()[p * 3 + c] = static_cast<float>(std::clamp(g * params.gain[c] * s, 0.0, 1.0));
    }
  }
  return out;
}

SceneSet synth_scene(const ImageTensor& base, const std::string& scene_id, int variants, std::uint64_t seed) {
  if (variants < 1) throw UsageError("a synthetic scene needs at least one variant");
  SceneSet s{scene_id, {}, {}};
  for (int k = 0; k < variants; ++k) s.instances.push_back(synth_relight(base, draw_illumination(derive_seed(seed, k))));
  return s;
}

namespace {

// Bilinearly interpolated lattice noise in [0,1] with `cells` cells across the image.
class ValueNoise {
 public:
  ValueNoise(Rng& rng, int cells_y, int cells_x) : ny_(cells_y + 2), nx_(cells_x + 2), v_(ny_ * nx_) {
    for (auto& x : v_) x = uniform(rng, 0.0, 1.0);
  }
  double operator()(double u, double v) const {  // u, v in [0,1)
    const double fx = u * (nx_ - 2);
    const double fy = v * (ny_ - 2);
    const int ix = static_cast<int>(fx);
    const int iy = static_cast<int>(fy);
    const double tx = smooth(fx - ix);
    const double ty = smooth(fy - iy);
    const double a = at(iy, ix) * (1 - tx) + at(iy, ix + 1) * tx;
    const double b = at(iy + 1, ix) * (1 - tx) + at(iy + 1, ix + 1) * tx;
    return a * (1 - ty) + b * ty;
  }

 private:
  static double smooth(double t) { return t * t * (3 - 2 * t); }
  double at(int y, int x) const { return v_[static_cast<std::size_t>(y) * nx_ + x]; }
  int ny_, nx_;
  std::vector<double> v_;
};

// Dark or light level plus a moderate tint.
std::array<double, 3> random_color(Rng& rng) {
  const double level = uniform_int(rng, 0, 1) ? uniform(rng, 0.55, 0.95) : uniform(rng, 0.05, 0.4);
  std::array<double, 3> c{};
  for (auto& v : c) v = std::clamp(level + uniform(rng, -0.2, 0.2), 0.02, 0.98);
  return c;
}

void gaussian_blur_inplace(ImageTensor& img, double sigma) {
  const int r = static_cast<int>(std::ceil(2.5 * sigma));
  std::vector<double> k(2 * r + 1);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) sum += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& x : k) x /= sum;
  const int h = img.height(), w = img.width(), c = img.channels();
  ImageTensor tmp(h, w, c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (int i = -r; i <= r; ++i) s += k[i + r] * img.at(y, std::clamp(x + i, 0, w - 1), ch);
        tmp.at(y, x, ch) = static_cast<float>(s);
      }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (int i = -r; i <= r; ++i) s += k[i + r] * tmp.at(std::clamp(y + i, 0, h - 1), x, ch);
        img.at(y, x, ch) = static_cast<float>(s);
      }
}

}  // namespace

ImageTensor procedural_base_image(int height, int width, std::uint64_t seed) {
  Rng rng(seed);
  ImageTensor img(height, width, 3);
  const auto c0 = random_color(rng);
  const auto c1 = random_color(rng);
  const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  ValueNoise bg_noise(rng, 4, 4);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double u = static_cast<double>(x) / width, v = static_cast<double>(y) / height;
      const double t = std::clamp(0.5 + 0.5 * (std::cos(angle) * (u - 0.5) + std::sin(angle) * (v - 0.5)) * 2.0, 0.0, 1.0);
      const double n = bg_noise(u, v) - 0.5;
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<float>(c0[c] * (1 - t) + c1[c] * t + 0.25 * n);
    }

  const int shapes = uniform_int(rng, 50, 90);
  const double scale = std::min(height, width);
  for (int s = 0; s < shapes; ++s) {
    const int kind = uniform_int(rng, 0, 2);    // ellipse, rectangle, triangle
    const int fill = uniform_int(rng, 0, 3);    // flat, gradient, stripes, noise
    const auto col = random_color(rng);
    const auto col2 = random_color(rng);
    const double cx = uniform(rng, 0.0, width), cy = uniform(rng, 0.0, height);
    const double rx = uniform(rng, 0.03, 0.18) * scale, ry = uniform(rng, 0.03, 0.18) * scale;
    const double rot = uniform(rng, 0.0, std::numbers::pi);
    const double freq = uniform(rng, 0.08, 0.5);
    const double sangle = uniform(rng, 0.0, std::numbers::pi);
    ValueNoise tex(rng, uniform_int(rng, 4, 16), uniform_int(rng, 4, 16));
    // Triangle vertices in the shape's local frame.
    std::array<std::array<double, 2>, 3> tri{};
    for (auto& p : tri) p = {uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0)};

    const int x0 = std::max(0, static_cast<int>(cx - 1.5 * std::max(rx, ry)));
    const int x1 = std::min(width - 1, static_cast<int>(cx + 1.5 * std::max(rx, ry)));
    const int y0 = std::max(0, static_cast<int>(cy - 1.5 * std::max(rx, ry)));
    const int y1 = std::min(height - 1, static_cast<int>(cy + 1.5 * std::max(rx, ry)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double dx = x - cx, dy = y - cy;
        const double lx = (std::cos(rot) * dx + std::sin(rot) * dy) / rx;
        const double ly = (-std::sin(rot) * dx + std::cos(rot) * dy) / ry;
        bool inside = false;
        if (kind == 0) {
          inside = lx * lx + ly * ly <= 1.0;
        } else if (kind == 1) {
          inside = std::abs(lx) <= 1.0 && std::abs(ly) <= 1.0;
        } else {
          auto edge = [&](int i, int j) {
            return (tri[j][0] - tri[i][0]) * (ly - tri[i][1]) - (tri[j][1] - tri[i][1]) * (lx - tri[i][0]);
          };
          const double e0 = edge(0, 1), e1 = edge(1, 2), e2 = edge(2, 0);
          inside = (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
        }
        if (!inside) continue;
        double t = 0.0;
        switch (fill) {
          case 1: t = std::clamp(0.5 + 0.5 * lx, 0.0, 1.0); break;
          case 2: t = 0.5 + 0.5 * std::sin(freq * (std::cos(sangle) * x + std::sin(sangle) * y)); break;
          case 3: t = tex(static_cast<double>(x) / width, static_cast<double>(y) / height); break;
          default: break;
        }
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<float>(col[c] * (1 - t) + col2[c] * t);
      }
  }

  ValueNoise grain(rng, height / 3, width / 3);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double g = 0.08 * (grain(static_cast<double>(x) / width, static_cast<double>(y) / height) - 0.5);
      for (int c = 0; c < 3; ++c) img.at(y, x, c) += static_cast<float>(g);
    }
  gaussian_blur_inplace(img, 0.8);
  // Stretch the 1st..99th percentile onto the usable range.
  std::vector<float> sorted(img.data().begin(), img.data().end());
  const auto q = [&](double f) {
    auto it = sorted.begin() + static_cast<std::ptrdiff_t>(f * (sorted.size() - 1));
    std::nth_element(sorted.begin(), it, sorted.end());
    return *it;
  };
  const float lo = q(0.01), hi = q(0.99);
  const float gain = hi - lo > 1e-3f ? 0.92f / (hi - lo) : 1.0f;
  for (auto& v : img.data()) v = std::clamp(0.04f + (v - lo) * gain, 0.02f, 0.98f);
  return img;
}

Mask mask_from_image(const ImageTensor& img) {
  const ImageTensor g = luma(img);
  Mask m{g.height(), g.width(), std::vector<unsigned char>(g.pixels())};
  for (std::size_t p = 0; p < g.pixels(); ++p) m.bits[p] = g.data()[p] >= 0.5f ? 1 : 0;
  return m;
}

std::vector<SceneSet> ingest_scene_dir(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("scene directory '" + root.string() + "' does not exist");
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());

  std::vector<SceneSet> scenes;
  for (const auto& dir : dirs) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());

    SceneSet scene;
    scene.scene_id = dir.filename().string();
    for (const auto& f : files) scene.instances.push_back(load_png(f));
    const fs::path mask_dir = dir / "masks";
    if (fs::is_directory(mask_dir)) {
      for (const auto& f : files) {
        const fs::path mp = mask_dir / f.filename();
        if (!fs::exists(mp))
          throw DataError("scene '" + scene.scene_id + "': missing mask for " + f.filename().string());
        scene.masks.push_back(mask_from_image(load_png(mp)));
      }
    }
    scene.validate();
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

void write_scene_dir(const std::vector<SceneSet>& scenes, const fs::path& root) {
  for (const auto& scene : scenes) {
    scene.validate();
    const fs::path dir = root / scene.scene_id;
    std::error_code ec;
    fs::create_directories(scene.masks.empty() ? dir : dir / "masks", ec);
    if (ec) throw DataError("cannot create '" + dir.string() + "'");
    for (std::size_t k = 0; k < scene.instances.size(); ++k) {
      char name[16];
      std::snprintf(name, sizeof name, "%02zu.png", k);
      save_png(scene.instances[k], dir / name);
      if (!scene.masks.empty()) {
        const Mask& m = scene.masks[k];
        ImageTensor mi(m.height, m.width, 1);
        for (std::size_t p = 0; p < m.bits.size(); ++p) mi.data()[p] = m.bits[p] ? 1.0f : 0.0f;
        save_png(mi, dir / "masks" / name);
      }
    }
  }
}

namespace {

bool box_valid(const Mask* m, const BoundingBox& b) {
  if (!m) return true;
  for (int y = b.y; y < b.y + b.side; ++y)
    for (int x = b.x; x < b.x + b.side; ++x)
      if (!m->at(y, x)) return false;
  return true;
}

constexpr std::array<Shift, 8> kCompass{{{-1, -1}, {0, -1}, {1, -1}, {-1, 0}, {1, 0}, {-1, 1}, {0, 1}, {1, 1}}};

}  // namespace

std::vector<PatchTriplet> sample_triplets(const SceneSet& scene, int count, const SamplingConfig& cfg,
                                          std::uint64_t seed) {
  scene.validate();
  const int h = scene.instances.front().height();
  const int w = scene.instances.front().width();
  if (h < cfg.patch + cfg.shift_px || w < cfg.patch + cfg.shift_px)
    throw DataError("scene '" + scene.scene_id + "' (" + std::to_string(h) + "x" + std::to_string(w) +
                    ") is smaller than patch + shift = " + std::to_string(cfg.patch + cfg.shift_px));

  Rng rng(seed);
  const int n = static_cast<int>(scene.instances.size());
  std::vector<PatchTriplet> out;
  out.reserve(count);
  for (int t = 0; t < count; ++t) {
    bool done = false;
    int attempts = 0;
    while (!done && attempts < cfg.max_attempts) {
      ++attempts;
      // Unordered pair, then a random orientation.
      int i = uniform_int(rng, 0, n - 1);
      int j = uniform_int(rng, 0, n - 2);
      if (j >= i) ++j;
      const BoundingBox a{uniform_int(rng, 0, w - cfg.patch), uniform_int(rng, 0, h - cfg.patch), cfg.patch};
      const ImageTensor& i1 = scene.instances[i];
      const ImageTensor& i2 = scene.instances[j];
      const Mask* m1 = scene.has_masks() ? &scene.masks[i] : nullptr;
      const Mask* m2 = scene.has_masks() ? &scene.masks[j] : nullptr;
      if (!box_valid(m1, a) || !box_valid(m2, a)) continue;
      ImageTensor anchor = crop(i1, a);
      if (stddev(anchor) < cfg.sigma_p) continue;

      while (attempts < cfg.max_attempts) {
        const Shift dir = kCompass[uniform_int(rng, 0, 7)];
        const Shift s{dir.dx * cfg.shift_px, dir.dy * cfg.shift_px};
        const BoundingBox nb{a.x + s.dx, a.y + s.dy, cfg.patch};
        if (box_inside(nb, h, w) && box_valid(m2, nb)) {
          out.push_back({std::move(anchor), crop(i2, a), crop(i2, nb), scene.scene_id, a, s});
          done = true;
          break;
        }
        ++attempts;
      }
    }
    if (!done)
      throw SamplingExhausted("sampling exhausted for scene '" + scene.scene_id + "' after " +
                                  std::to_string(attempts) + " attempts (sigma_p=" +
                                  std::to_string(cfg.sigma_p) + ")",
                              attempts);
  }
  return out;
}

namespace {
constexpr std::string_view kArchiveMagic = "PTRP";
}

void TripletArchive::write(const fs::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
  os.write(kArchiveMagic.data(), 4);
  binio::put<std::uint32_t>(os, kVersion);
  binio::put<std::uint64_t>(os, triplets.size());
  binio::put<std::uint32_t>(os, patch_side);
  binio::put<std::uint32_t>(os, channels);
  for (const auto& t : triplets) {
    binio::put_string16(os, t.scene_id);
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(t.anchor_box.x));
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(t.anchor_box.y));
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(t.anchor_box.side));
    binio::put<std::int32_t>(os, t.shift.dx);
    binio::put<std::int32_t>(os, t.shift.dy);
    for (const ImageTensor* p : {&t.anchor, &t.positive, &t.negative}) {
      if (p->height() != static_cast<int>(patch_side) || p->width() != static_cast<int>(patch_side) ||
          p->channels() != static_cast<int>(channels))
        throw FormatError("triplet patch shape does not match archive header");
      binio::put_floats(os, p->to_planar());
    }
  }
  if (!os) throw DataError("write failed for '" + path.string() + "'");
}

TripletArchive TripletArchive::read(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open archive '" + path.string() + "'");
  binio::expect_magic(is, kArchiveMagic, path.string());
  const auto version = binio::get<std::uint32_t>(is, "version");
  if (version != kVersion) throw FormatError("unsupported archive version " + std::to_string(version));
  const auto count = binio::get<std::uint64_t>(is, "triplet count");
  TripletArchive ar;
  ar.patch_side = binio::get<std::uint32_t>(is, "patch side");
  ar.channels = binio::get<std::uint32_t>(is, "channels");
  if (ar.patch_side == 0 || ar.channels == 0) throw FormatError("archive header has zero patch size");
  const int side = static_cast<int>(ar.patch_side);
  const int ch = static_cast<int>(ar.channels);
  std::vector<float> buf(static_cast<std::size_t>(side) * side * ch);
  ar.triplets.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 16)));
  for (std::uint64_t k = 0; k < count; ++k) {
    PatchTriplet t;
    t.scene_id = binio::get_string16(is, "scene id");
    t.anchor_box.x = static_cast<int>(binio::get<std::uint32_t>(is, "anchor box"));
    t.anchor_box.y = static_cast<int>(binio::get<std::uint32_t>(is, "anchor box"));
    t.anchor_box.side = static_cast<int>(binio::get<std::uint32_t>(is, "anchor box"));
    t.shift.dx = binio::get<std::int32_t>(is, "shift");
    t.shift.dy = binio::get<std::int32_t>(is, "shift");
    for (ImageTensor* p : {&t.anchor, &t.positive, &t.negative}) {
      binio::get_floats(is, buf, "triplet patch");
      *p = ImageTensor::from_planar(side, side, ch, buf);
    }
    ar.triplets.push_back(std::move(t));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in archive '" + path.string() + "'");
  return ar;
}

TripletArchive build_training_set(const std::vector<SceneSet>& scenes, int triplets_per_pair,
                                  const SamplingConfig& cfg, std::uint64_t seed) {
  if (scenes.empty()) throw DataError("build_training_set needs at least one scene");
  if (triplets_per_pair < 1) throw UsageError("triplets per pair must be >= 1");
  TripletArchive ar;
  ar.patch_side = static_cast<std::uint32_t>(cfg.patch);
  ar.channels = static_cast<std::uint32_t>(scenes.front().instances.front().channels());
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const std::size_t n = scenes[s].instances.size();
    const int count = static_cast<int>(triplets_per_pair * n * (n - 1) / 2);
    auto part = sample_triplets(scenes[s], count, cfg, derive_seed(seed, s));
    for (auto& t : part) {
      if (t.anchor.channels() != static_cast<int>(ar.channels))
        throw DataError("scene '" + scenes[s].scene_id + "' has a different channel count");
      ar.triplets.push_back(std::move(t));
    }
  }
  return ar;
}

}  // namespace photocon
