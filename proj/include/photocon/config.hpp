#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "photocon/registration.hpp"
#include "photocon/trainer.hpp"

namespace photocon {

/// Flat `key = value` settings; `#` starts a comment.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config(std::string_view text, const std::string& origin = "<config>");
ConfigMap load_config(const std::filesystem::path& path);

/// Applies recognized keys (TrainConfig, LossWeights, NetworkConfig and
/// EccConfig field names). Unknown keys and malformed values throw UsageError.
void apply_config(const ConfigMap& cfg, TrainConfig& train, EccConfig& ecc);

}  // namespace photocon
