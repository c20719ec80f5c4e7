#include "photocon/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "photocon/error.hpp"

namespace photocon {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw UsageError("config key '" + key + "': cannot parse '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw UsageError("config key '" + key + "': expected true/false, got '" + v + "'");
}

}  // namespace

ConfigMap parse_config(std::string_view text, const std::string& origin) {
  ConfigMap out;
  std::istringstream is{std::string(text)};
  std::string line;
  for (int n = 1; std::getline(is, line); ++n) {
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos)
      throw UsageError(origin + ":" + std::to_string(n) + ": expected 'key = value'");
    const std::string key(trim(s.substr(0, eq))), value(trim(s.substr(eq + 1)));
    if (key.empty()) throw UsageError(origin + ":" + std::to_string(n) + ": empty key");
    out[key] = value;
  }
  return out;
}

ConfigMap load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), path.string());
}

void apply_config(const ConfigMap& cfg, TrainConfig& train, EccConfig& ecc) {
  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto i32 = [](int& f) -> Setter { return [&f](const auto& k, const auto& v) { f = parse_number<int>(k, v); }; };
  auto f64 = [](double& f) -> Setter {
    return [&f](const auto& k, const auto& v) { f = parse_number<double>(k, v); };
  };
  const std::map<std::string, Setter> setters = {
      {"batch_size", i32(train.batch_size)},
      {"epoch_size", i32(train.epoch_size)},
      {"epochs", i32(train.epochs)},
      {"learning_rate", f64(train.learning_rate)},
      {"beta1", f64(train.beta1)},
      {"beta2", f64(train.beta2)},
      {"adam_epsilon", f64(train.adam_epsilon)},
      {"seed", [&](const auto& k, const auto& v) { train.seed = parse_number<std::uint64_t>(k, v); }},
      {"checkpoint_interval", i32(train.checkpoint_interval)},
      {"w_triplet", f64(train.loss.w_triplet)},
      {"w_intra", f64(train.loss.w_intra)},
      {"w_scale", f64(train.loss.w_scale)},
      {"w_mc", f64(train.loss.w_mc)},
      {"w_rot", f64(train.loss.w_rot)},
      {"margin", f64(train.loss.margin)},
      {"epsilon_norm", f64(train.loss.epsilon_norm)},
      {"intra_mean_l2", [&](const auto& k, const auto& v) { train.loss.intra_mean_l2 = parse_bool(k, v); }},
      {"levels", i32(train.network.levels)},
      {"base_width", i32(train.network.base_width)},
      {"out_channels", i32(train.network.out_channels)},
      {"max_iterations", i32(ecc.max_iterations)},
      {"epsilon", f64(ecc.epsilon)},
      {"pyramid_levels", i32(ecc.pyramid_levels)},
  };
  for (const auto& [key, value] : cfg) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw UsageError("unknown config key '" + key + "'");
    it->second(key, value);
  }
}

}  // namespace photocon
