#include "photocon/image.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "photocon/error.hpp"

namespace photocon {

ImageTensor::ImageTensor(int height, int width, int channels, float fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 1 || width < 1 || channels < 1)
    throw GeometryError("image dimensions must be positive, got " + std::to_string(height) + "x" +
                        std::to_string(width) + "x" + std::to_string(channels));
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

ImageTensor::ImageTensor(int height, int width, int channels, std::vector<float> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  if (height < 1 || width < 1 || channels < 1)
    throw GeometryError("image dimensions must be positive");
  if (data_.size() != static_cast<std::size_t>(height) * width * channels)
    throw GeometryError("image data length does not match " + std::to_string(height) + "x" +
                        std::to_string(width) + "x" + std::to_string(channels));
}

std::vector<float> ImageTensor::to_planar() const {
  std::vector<float> out(data_.size());
  const std::size_t n = pixels();
  for (std::size_t p = 0; p < n; ++p)
    for (int c = 0; c < channels_; ++c) out[c * n + p] = data_[p * channels_ + c];
  return out;
}

ImageTensor ImageTensor::from_planar(int height, int width, int channels, std::span<const float> planes) {
  ImageTensor img(height, width, channels);
  const std::size_t n = img.pixels();
  if (planes.size() != n * channels) throw GeometryError("planar buffer size mismatch");
  for (std::size_t p = 0; p < n; ++p)
    for (int c = 0; c < channels; ++c) img.data_[p * channels + c] = planes[c * n + p];
  return img;
}

std::size_t Mask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), static_cast<unsigned char>(1)));
}

bool box_inside(const BoundingBox& box, int height, int width) noexcept {
  return box.side >= 1 && box.x >= 0 && box.y >= 0 && box.x + box.side <= width &&
         box.y + box.side <= height;
}

ImageTensor crop_rect(const ImageTensor& img, int x, int y, int height, int width) {
  if (height < 1 || width < 1 || x < 0 || y < 0 || x + width > img.width() || y + height > img.height())
    throw GeometryError("crop (x=" + std::to_string(x) + ", y=" + std::to_string(y) +
                        ", h=" + std::to_string(height) + ", w=" + std::to_string(width) +
                        ") outside " + std::to_string(img.height()) + "x" +
                        std::to_string(img.width()) + " image");
  ImageTensor out(height, width, img.channels());
  const int c = img.channels();
  for (int i = 0; i < height; ++i) {
    const float* src = &img.data()[(static_cast<std::size_t>(y + i) * img.width() + x) * c];
    std::copy(src, src + static_cast<std::size_t>(width) * c, &out.at(i, 0, 0));
  }
  return out;
}

ImageTensor crop(const ImageTensor& img, const BoundingBox& box) {
  if (!box_inside(box, img.height(), img.width()))
    throw GeometryError("box (x=" + std::to_string(box.x) + ", y=" + std::to_string(box.y) +
                        ", side=" + std::to_string(box.side) + ") outside " +
                        std::to_string(img.height()) + "x" + std::to_string(img.width()) + " image");
  return crop_rect(img, box.x, box.y, box.side, box.side);
}

namespace {

struct Tap {
  int lo;
  int hi;
  double frac;
};

std::vector<Tap> corner_aligned_taps(int in, int out) {
  std::vector<Tap> taps(out);
  for (int i = 0; i < out; ++i) {
    const double src = out == 1 ? 0.0 : static_cast<double>(i) * (in - 1) / (out - 1);
    int lo = static_cast<int>(std::floor(src));
    lo = std::clamp(lo, 0, in - 1);
    const int hi = std::min(lo + 1, in - 1);
    taps[i] = {lo, hi, src - lo};
  }
  return taps;
}

}  // namespace

ImageTensor bilinear_resize(const ImageTensor& img, int new_height, int new_width) {
  if (new_height < 1 || new_width < 1) throw GeometryError("resize target must be at least 1x1");
  const auto ty = corner_aligned_taps(img.height(), new_height);
  const auto tx = corner_aligned_taps(img.width(), new_width);
  ImageTensor out(new_height, new_width, img.channels());
  for (int i = 0; i < new_height; ++i) {
    const auto& a = ty[i];
    for (int j = 0; j < new_width; ++j) {
      const auto& b = tx[j];
      for (int c = 0; c < img.channels(); ++c) {
        const double top = (1.0 - b.frac) * img.at(a.lo, b.lo, c) + b.frac * img.at(a.lo, b.hi, c);
        const double bot = (1.0 - b.frac) * img.at(a.hi, b.lo, c) + b.frac * img.at(a.hi, b.hi, c);
        out.at(i, j, c) = static_cast<float>((1.0 - a.frac) * top + a.frac * bot);
      }
    }
  }
  return out;
}

ImageTensor luma(const ImageTensor& img) {
  if (img.channels() == 1) return img;
  if (img.channels() != 3)
    throw GeometryError("luma expects 1 or 3 channels, got " + std::to_string(img.channels()));
  ImageTensor out(img.height(), img.width(), 1);
  const auto src = img.data();
  auto dst = out.data();
  for (std::size_t p = 0; p < img.pixels(); ++p)
    dst[p] = (src[3 * p] + src[3 * p + 1] + src[3 * p + 2]) / 3.0f;
  return out;
}

ImageTensor select_channel(const ImageTensor& img, int channel) {
  if (channel < 0 || channel >= img.channels()) throw GeometryError("channel index out of range");
  ImageTensor out(img.height(), img.width(), 1);
  for (std::size_t p = 0; p < img.pixels(); ++p)
    out.data()[p] = img.data()[p * img.channels() + channel];
  return out;
}

double stddev(const ImageTensor& img) {
  // Channel mean computed inline so K-channel maps are accepted too.
  const int c = img.channels();
  const std::size_t n = img.pixels();
  std::vector<double> v(n);
  for (std::size_t p = 0; p < n; ++p) {
    double s = 0.0;
    for (int k = 0; k < c; ++k) s += img.data()[p * c + k];
    v[p] = s / c * 255.0;
  }
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return std::sqrt(var / static_cast<double>(n));
}

double psnr(const ImageTensor& a, const ImageTensor& b, const Mask* valid) {
  if (!a.same_shape(b)) throw GeometryError("psnr: shape mismatch");
  if (valid && (valid->height != a.height() || valid->width != a.width()))
    throw GeometryError("psnr: mask shape mismatch");
  const int c = a.channels();
  double sse = 0.0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < a.pixels(); ++p) {
    if (valid && !valid->bits[p]) continue;
    for (int k = 0; k < c; ++k) {
      const double d = (static_cast<double>(a.data()[p * c + k]) - b.data()[p * c + k]) * 255.0;
      sse += d * d;
    }
    count += c;
  }
  if (count == 0) throw GeometryError("psnr: empty mask");
  if (sse == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = sse / static_cast<double>(count);
  return 20.0 * std::log10(255.0) - 10.0 * std::log10(mse);
}

double iou(const BoundingBox& a, const BoundingBox& b) noexcept {
  const int ix = std::max(0, std::min(a.x + a.side, b.x + b.side) - std::max(a.x, b.x));
  const int iy = std::max(0, std::min(a.y + a.side, b.y + b.side) - std::max(a.y, b.y));
  const double inter = static_cast<double>(ix) * iy;
  const double uni = static_cast<double>(a.side) * a.side + static_cast<double>(b.side) * b.side - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

ImageTensor rotate90(const ImageTensor& img, int quarter_turns) {
  const int q = ((quarter_turns % 4) + 4) % 4;
  if (q == 0) return img;
  const int h = img.height();
  const int w = img.width();
  const int c = img.channels();
  const int oh = (q % 2) ? w : h;
  const int ow = (q % 2) ? h : w;
  ImageTensor out(oh, ow, c);
  for (int i = 0; i < oh; ++i)
    for (int j = 0; j < ow; ++j) {
      int sy = 0;
      int sx = 0;
      switch (q) {
        case 1: sy = j; sx = w - 1 - i; break;
        case 2: sy = h - 1 - i; sx = w - 1 - j; break;
        default: sy = h - 1 - j; sx = i; break;
      }
      for (int k = 0; k < c; ++k) out.at(i, j, k) = img.at(sy, sx, k);
    }
  return out;
}

bool all_finite(const ImageTensor& img) noexcept {
  return std::all_of(img.data().begin(), img.data().end(), [](float v) { return std::isfinite(v); });
}

}  // namespace photocon
