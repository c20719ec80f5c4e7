#pragma once

#include <filesystem>
#include <string_view>
#include <vector>

#include "photocon/network.hpp"

namespace photocon::detail {

struct TensorContainer {
  NetworkConfig config;
  std::vector<NamedTensor> tensors;
};

/// magic(4) | version u32 | levels, base_width, out_channels, nonlinearity u32 |
/// count u32 | per tensor: name (u16 + bytes), rank u8, dims u32, f32 payload.
void write_container(const std::filesystem::path& path, std::string_view magic, const TensorContainer& c);
TensorContainer read_container(const std::filesystem::path& path, std::string_view magic);

}  // namespace photocon::detail
