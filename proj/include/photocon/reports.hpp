#pragma once

#include <string>

#include <json.hpp>

#include "photocon/invariance.hpp"
#include "photocon/losses.hpp"
#include "photocon/matcher.hpp"
#include "photocon/registration.hpp"
#include "photocon/trainer.hpp"

namespace photocon {

using Json = nlohmann::ordered_json;

Json to_json(const LossTerms& t);
Json to_json(const LossBreakdown& b);
Json to_json(const NetworkConfig& c);
Json to_json(const LossWeights& w);
Json to_json(const TrainConfig& c);
Json to_json(const EccConfig& c);
Json to_json(const AffineWarp& w);
Json to_json(const RocCurve& r);
Json to_json(const MatchBenchReport& r);
Json to_json(const RegistrationBenchReport& r);
Json to_json(const InvarianceReport& r);
Json to_json(const CropCommutationReport& r);

std::string trials_csv(const MatchBenchReport& r);
std::string trials_csv(const RegistrationBenchReport& r);
std::string samples_csv(const InvarianceReport& r);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace photocon
