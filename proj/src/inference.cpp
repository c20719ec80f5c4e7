#include "photocon/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

#include "photocon/binio.hpp"
#include "photocon/error.hpp"
#include "photocon/png_io.hpp"

namespace photocon {

ImageTensor transform_image(const ModelWeights& weights, const ImageTensor& img) { return forward(weights, img); }

Quantized normalize_to_8bit(const ImageTensor& rep) {
  if (rep.empty()) throw GeometryError("normalize_to_8bit: empty representation");
  if (!all_finite(rep)) throw NumericError("normalize_to_8bit: representation holds non-finite values");
  const auto [lo_it, hi_it] = std::minmax_element(rep.data().begin(), rep.data().end());
  const double lo = *lo_it, hi = *hi_it;
  Quantized q{ImageTensor(rep.height(), rep.width(), rep.channels()), hi == lo};
  if (q.degenerate) return q;
  const double range = hi - lo;
  auto out = q.image.data();
  for (std::size_t i = 0; i < rep.size(); ++i) {
    const double k = std::floor(255.0 * (static_cast<double>(rep.data()[i]) - lo) / range + 0.5);
    out[i] = static_cast<float>(k / 255.0);
  }
  return q;
}

ImageTensor quantize_image(const ImageTensor& img) {
  ImageTensor out(img.height(), img.width(), img.channels());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = std::clamp(static_cast<double>(img.data()[i]), 0.0, 1.0);
    out.data()[i] = static_cast<float>(std::floor(255.0 * v + 0.5) / 255.0);
  }
  return out;
}

DiffResult diff_map(const ImageTensor& rep1, const ImageTensor& rep2, std::optional<double> threshold) {
  if (!rep1.same_shape(rep2)) throw GeometryError("diff_map: representation shapes differ");
  const int h = rep1.height(), w = rep1.width(), k = rep1.channels();
  DiffResult r{ImageTensor(h, w, 1), ImageTensor(h, w, 1), std::nullopt};
  if (threshold) r.mask = Mask{h, w, std::vector<unsigned char>(rep1.pixels(), 0)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double d = 0.0;
      for (int c = 0; c < k; ++c) d += static_cast<double>(rep1.at(y, x, c)) - rep2.at(y, x, c);
      d /= k;
      r.difference.at(y, x, 0) = static_cast<float>(d);
      const double level = std::clamp(std::floor(127.5 * (1.0 + d) + 0.5), 0.0, 255.0);
      r.display.at(y, x, 0) = static_cast<float>(level / 255.0);
      if (threshold && std::abs(d) >= *threshold) r.mask->bits[static_cast<std::size_t>(y) * w + x] = 1;
    }
  return r;
}

std::vector<std::filesystem::path> save_representation(const ImageTensor& quantized,
                                                       const std::filesystem::path& path) {
  const int k = quantized.channels();
  if (k == 1 || k == 3) {
    save_png(quantized, path);
    return {path};
  }
  std::vector<std::filesystem::path> written;
  for (int c = 0; c < k; ++c) {
    auto p = path.parent_path() / (path.stem().string() + "_c" + std::to_string(c) + ".png");
    save_png(select_channel(quantized, c), p);
    written.push_back(std::move(p));
  }
  return written;
}

void write_raw_representation(const ImageTensor& rep, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write '" + path.string() + "'");
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(rep.height()));
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(rep.width()));
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(rep.channels()));
  std::vector<float> plane(rep.pixels());
  for (int c = 0; c < rep.channels(); ++c) {
    for (std::size_t p = 0; p < plane.size(); ++p) plane[p] = rep.data()[p * rep.channels() + c];
    binio::put_floats(os, plane);
  }
  if (!os) throw DataError("write failed for '" + path.string() + "'");
}

ImageTensor read_raw_representation(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open '" + path.string() + "'");
  const auto h = binio::get<std::uint32_t>(is, "height");
  const auto w = binio::get<std::uint32_t>(is, "width");
  const auto c = binio::get<std::uint32_t>(is, "channels");
  if (h == 0 || w == 0 || c == 0 || h > (1u << 16) || w > (1u << 16) || c > 1024)
    throw FormatError("implausible shape in '" + path.string() + "'");
  ImageTensor rep(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
  std::vector<float> plane(rep.pixels());
  for (std::uint32_t k = 0; k < c; ++k) {
    binio::get_floats(is, plane, path.string());
    for (std::size_t p = 0; p < plane.size(); ++p) rep.data()[p * c + k] = plane[p];
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in '" + path.string() + "'");
  return rep;
}

}  // namespace photocon
