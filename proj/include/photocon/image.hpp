#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace photocon {

/// H x W x C raster, row-major with interleaved channels.
///
/// Natural images use [0,1]; raw network outputs are unbounded.
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(int height, int width, int channels, float fill = 0.0f);
  ImageTensor(int height, int width, int channels, std::vector<float> data);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  std::size_t pixels() const noexcept { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float& at(int y, int x, int c) noexcept { return data_[index(y, x, c)]; }
  float at(int y, int x, int c) const noexcept { return data_[index(y, x, c)]; }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  std::vector<float>& storage() noexcept { return data_; }

  bool same_shape(const ImageTensor& o) const noexcept {
    return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
  }

  // Channel-major copy: plane c occupies [c*H*W, (c+1)*H*W).
  std::vector<float> to_planar() const;
  static ImageTensor from_planar(int height, int width, int channels, std::span<const float> planes);

  bool operator==(const ImageTensor& o) const = default;

 private:
  std::size_t index(int y, int x, int c) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

/// Square box: left x, top y, side length.
struct BoundingBox {
  int x = 0;
  int y = 0;
  int side = 1;

  bool operator==(const BoundingBox&) const = default;
};

/// Binary H x W mask, 1 = usable.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<unsigned char> bits;

  bool at(int y, int x) const noexcept { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  std::size_t count() const noexcept;
};

bool box_inside(const BoundingBox& box, int height, int width) noexcept;

ImageTensor crop(const ImageTensor& img, const BoundingBox& box);
// Rectangular variant used where crops need not be square.
ImageTensor crop_rect(const ImageTensor& img, int x, int y, int height, int width);

/// Corner-aligned bilinear resampling: output sample i maps to input
/// coordinate i * (in - 1) / (out - 1).
ImageTensor bilinear_resize(const ImageTensor& img, int new_height, int new_width);

/// Unweighted channel mean. 1-channel input passes through.
ImageTensor luma(const ImageTensor& img);

ImageTensor select_channel(const ImageTensor& img, int channel);

/// Population standard deviation of luma on the 8-bit scale (luma * 255).
double stddev(const ImageTensor& img);

/// PSNR in dB with MAX = 255 on the 8-bit scale. Identical inputs give +inf.
double psnr(const ImageTensor& a, const ImageTensor& b, const Mask* valid = nullptr);

double iou(const BoundingBox& a, const BoundingBox& b) noexcept;

/// Counter-clockwise rotation by a multiple of 90 degrees (a pure pixel permutation).
ImageTensor rotate90(const ImageTensor& img, int quarter_turns);

bool all_finite(const ImageTensor& img) noexcept;

}  // namespace photocon
