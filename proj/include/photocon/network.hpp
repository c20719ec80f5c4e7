#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "photocon/image.hpp"

namespace photocon {

/// Encoder-decoder transform network configuration.
///
/// Every level has the same width. Blocks run parallel 1x1, 3x3 and 5x5
/// convolutions (width/3 channels each) with leaky-ReLU, concatenated.
/// Downsampling is a stride-2 3x3 convolution; upsampling is 2x bilinear
/// followed by a 3x3 convolution; skips concatenate encoder features into
/// the decoder. A final 3x3 convolution emits `out_channels` raw values.
struct NetworkConfig {
  static constexpr std::uint32_t kLeakyRelu = 1;

  int levels = 4;
  int base_width = 12;
  int out_channels = 3;
  std::uint32_t nonlinearity = kLeakyRelu;
  float leaky_slope = 0.1f;

  void validate() const;
  // Smallest accepted input side; inputs are reflect-padded to a multiple of this.
  int alignment() const noexcept { return 1 << levels; }
  bool operator==(const NetworkConfig&) const = default;
};

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<float> values;

  std::size_t numel() const noexcept;
  bool operator==(const NamedTensor&) const = default;
};

struct ModelWeights {
  static constexpr std::uint32_t kVersion = 1;

  NetworkConfig config;
  std::vector<NamedTensor> tensors;

  int in_channels() const;
  const NamedTensor& tensor(const std::string& name) const;
  std::size_t parameter_count() const noexcept;

  std::vector<float> flatten() const;
  void assign(const std::vector<float>& flat);

  void validate() const;
  bool operator==(const ModelWeights&) const = default;
};

/// Uniform(+-sqrt(6 / fan_in)) kernels, zero biases.
ModelWeights init_weights(const NetworkConfig& config, int in_channels, std::uint64_t seed);

/// Applies the network to a full image. Output keeps the input's H x W.
ImageTensor forward(const ModelWeights& weights, const ImageTensor& img);

void save_weights(const ModelWeights& weights, const std::filesystem::path& path);
ModelWeights load_weights(const std::filesystem::path& path);

/// Size in bytes of the serialized weight file.
std::size_t serialized_size(const ModelWeights& weights);

}  // namespace photocon
