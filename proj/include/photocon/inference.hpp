#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "photocon/image.hpp"
#include "photocon/network.hpp"

namespace photocon {

/// Raw (unquantized) representation, H x W x K. Same as forward().
ImageTensor transform_image(const ModelWeights& weights, const ImageTensor& img);

struct Quantized {
  ImageTensor image;        // values k / 255, k in {0, ..., 255}
  bool degenerate = false;  // max == min; image is all zeros
};

/// Joint min-max over all channels and pixels, v -> floor(255 (v - min) / (max - min) + 0.5).
Quantized normalize_to_8bit(const ImageTensor& rep);

/// An image already in [0,1] rounded to its stored 8-bit levels.
ImageTensor quantize_image(const ImageTensor& img);

struct DiffResult {
  ImageTensor difference;    // 1 channel: mean over channels of rep1 - rep2
  ImageTensor display;       // 1 channel in [0,1]: zero difference is mid gray (128/255)
  std::optional<Mask> mask;  // |difference| >= threshold
};

/// The display maps d to floor(127.5 (1 + d) + 0.5) / 255, clamped, so
/// differences of quantized maps in [-1, 1] use the full 8-bit range.
DiffResult diff_map(const ImageTensor& rep1, const ImageTensor& rep2, std::optional<double> threshold = std::nullopt);

/// K = 3 -> RGB PNG, K = 1 -> gray PNG, otherwise one gray PNG per channel
/// named <stem>_c<i>.png. Returns the files written.
std::vector<std::filesystem::path> save_representation(const ImageTensor& quantized, const std::filesystem::path& path);

/// Unquantized dump: u32 height, width, channels (little-endian), then
/// planar f32 channel by channel.
void write_raw_representation(const ImageTensor& rep, const std::filesystem::path& path);
ImageTensor read_raw_representation(const std::filesystem::path& path);

}  // namespace photocon
