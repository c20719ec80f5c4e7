#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "photocon/image.hpp"
#include "photocon/random.hpp"

namespace testsupport {

inline photocon::ImageTensor random_image(int h, int w, int c, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  photocon::Rng rng(seed);
  photocon::ImageTensor img(h, w, c);
  for (auto& v : img.data()) v = static_cast<float>(photocon::uniform(rng, lo, hi));
  return img;
}

// Smooth-ish random image: random values blurred a little, so it has structure at several scales.
inline photocon::ImageTensor textured_image(int h, int w, int c, std::uint64_t seed) {
  auto src = random_image(h, w, c, seed);
  photocon::ImageTensor out(h, w, c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) {
        double s = 0;
        int n = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
            s += src.at(yy, xx, k);
            ++n;
          }
        out.at(y, x, k) = static_cast<float>(s / n);
      }
  return out;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) {
    path = std::filesystem::temp_directory_path() / ("photocon_test_" + name);
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::filesystem::path operator/(const std::string& s) const { return path / s; }
};

inline std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace testsupport
