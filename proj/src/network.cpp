#include "photocon/network.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "photocon/binio.hpp"
#include "photocon/detail/container.hpp"
#include "photocon/detail/engine.hpp"
#include "photocon/random.hpp"

namespace photocon {

namespace fs = std::filesystem;

void NetworkConfig::validate() const {
  if (levels < 1 || levels > 8) throw UsageError("network levels must be in [1, 8]");
  if (base_width < 3 || base_width % 3 != 0)
    throw UsageError("base_width must be a positive multiple of 3 (one share per branch), got " +
                     std::to_string(base_width));
  if (out_channels < 1) throw UsageError("out_channels must be >= 1");
  if (nonlinearity != kLeakyRelu) throw UsageError("unsupported nonlinearity code " + std::to_string(nonlinearity));
}

std::size_t NamedTensor::numel() const noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::uint32_t b) { return a * b; });
}

namespace detail {

NetLayout make_layout(const NetworkConfig& config, int in_channels) {
  config.validate();
  if (in_channels < 1) throw UsageError("network input channels must be >= 1");
  NetLayout L;
  L.config = config;
  L.in_channels = in_channels;
  const int w = config.base_width;

  auto conv = [&L](std::string name, int cin, int cout, int k, int stride) {
    ConvSpec s{std::move(name), cin, cout, k, stride, 0, 0};
    s.w_off = L.total;
    const std::size_t wn = static_cast<std::size_t>(cout) * cin * k * k;
    L.slots.push_back({s.name + ".weight",
                       {static_cast<std::uint32_t>(cout), static_cast<std::uint32_t>(cin),
                        static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k)},
                       L.total,
                       wn});
    L.total += wn;
    s.b_off = L.total;
    L.slots.push_back({s.name + ".bias", {static_cast<std::uint32_t>(cout)}, L.total, static_cast<std::size_t>(cout)});
    L.total += cout;
    return s;
  };
  auto block = [&](const std::string& name, int cin) {
    BlockSpec b;
    b.b1 = conv(name + ".b1", cin, w / 3, 1, 1);
    b.b3 = conv(name + ".b3", cin, w / 3, 3, 1);
    b.b5 = conv(name + ".b5", cin, w / 3, 5, 1);
    return b;
  };

  L.enc.push_back(block("enc0", in_channels));
  for (int l = 1; l <= config.levels; ++l) {
    L.down.push_back(conv("down" + std::to_string(l), w, w, 3, 2));
    L.enc.push_back(block("enc" + std::to_string(l), w));
  }
  L.up.resize(config.levels);
  L.dec.resize(config.levels);
  for (int l = config.levels - 1; l >= 0; --l) {
    L.up[l] = conv("up" + std::to_string(l), w, w, 3, 1);
    L.dec[l] = block("dec" + std::to_string(l), 2 * w);
  }
  L.head = conv("head", w, config.out_channels, 3, 1);
  return L;
}

}  // namespace detail

int ModelWeights::in_channels() const {
  const auto& t = tensor("enc0.b1.weight");
  return static_cast<int>(t.shape.at(1));
}

const NamedTensor& ModelWeights::tensor(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw FormatError("weights have no tensor named '" + name + "'");
}

std::size_t ModelWeights::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.values.size();
  return n;
}

std::vector<float> ModelWeights::flatten() const {
  std::vector<float> flat;
  flat.reserve(parameter_count());
  for (const auto& t : tensors) flat.insert(flat.end(), t.values.begin(), t.values.end());
  return flat;
}

void ModelWeights::assign(const std::vector<float>& flat) {
  if (flat.size() != parameter_count()) throw FormatError("flat parameter vector has the wrong length");
  std::size_t off = 0;
  for (auto& t : tensors) {
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
              flat.begin() + static_cast<std::ptrdiff_t>(off + t.values.size()), t.values.begin());
    off += t.values.size();
  }
}

void ModelWeights::validate() const {
  config.validate();
  const auto layout = detail::make_layout(config, in_channels());
  if (layout.slots.size() != tensors.size())
    throw FormatError("weights hold " + std::to_string(tensors.size()) + " tensors, config implies " +
                      std::to_string(layout.slots.size()));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& t = tensors[i];
    const auto& s = layout.slots[i];
    if (t.name != s.name || t.shape != s.shape)
      throw FormatError("tensor '" + t.name + "' is inconsistent with the network config (expected '" + s.name + "')");
    if (t.values.size() != t.numel()) throw FormatError("tensor '" + t.name + "' payload size mismatch");
    for (float v : t.values)
      if (!std::isfinite(v)) throw FormatError("tensor '" + t.name + "' holds a non-finite value");
  }
}

ModelWeights init_weights(const NetworkConfig& config, int in_channels, std::uint64_t seed) {
  const auto layout = detail::make_layout(config, in_channels);
  ModelWeights w;
  w.config = config;
  Rng rng(seed);
  for (const auto& slot : layout.slots) {
    NamedTensor t{slot.name, slot.shape, std::vector<float>(slot.numel, 0.0f)};
    if (slot.shape.size() == 4) {
      const double fan_in = static_cast<double>(slot.shape[1]) * slot.shape[2] * slot.shape[3];
      const double bound = std::sqrt(6.0 / fan_in);
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& v : t.values) v = static_cast<float>(dist(rng));
    }
    w.tensors.push_back(std::move(t));
  }
  return w;
}

ImageTensor forward(const ModelWeights& weights, const ImageTensor& img) {
  detail::Engine<float> engine(detail::make_layout(weights.config, weights.in_channels()));
  const auto flat = weights.flatten();
  const auto planar = img.to_planar();
  const detail::Mat<float> in =
      Eigen::Map<const detail::Mat<float>>(planar.data(), img.channels(), static_cast<Eigen::Index>(img.pixels()));
  const detail::Mat<float> out = engine.forward(flat, in, img.height(), img.width(), nullptr);
  return ImageTensor::from_planar(img.height(), img.width(), static_cast<int>(out.rows()),
                                  std::span<const float>(out.data(), static_cast<std::size_t>(out.size())));
}

namespace {
constexpr std::string_view kWeightMagic = "PHIT";
}

namespace detail {

void write_container(const fs::path& path, std::string_view magic, const TensorContainer& c) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
  os.write(magic.data(), 4);
  binio::put<std::uint32_t>(os, ModelWeights::kVersion);
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(c.config.levels));
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(c.config.base_width));
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(c.config.out_channels));
  binio::put<std::uint32_t>(os, c.config.nonlinearity);
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& t : c.tensors) {
    binio::put_string16(os, t.name);
    binio::put<std::uint8_t>(os, static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) binio::put<std::uint32_t>(os, d);
    binio::put_floats(os, t.values);
  }
  if (!os) throw DataError("write failed for '" + path.string() + "'");
}

TensorContainer read_container(const fs::path& path, std::string_view magic) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open '" + path.string() + "'");
  binio::expect_magic(is, magic, path.string());
  const auto version = binio::get<std::uint32_t>(is, "version");
  if (version != ModelWeights::kVersion)
    throw FormatError("unsupported version " + std::to_string(version) + " in '" + path.string() + "'");
  TensorContainer c;
  c.config.levels = static_cast<int>(binio::get<std::uint32_t>(is, "config"));
  c.config.base_width = static_cast<int>(binio::get<std::uint32_t>(is, "config"));
  c.config.out_channels = static_cast<int>(binio::get<std::uint32_t>(is, "config"));
  c.config.nonlinearity = binio::get<std::uint32_t>(is, "config");
  const auto count = binio::get<std::uint32_t>(is, "tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = binio::get_string16(is, "tensor name");
    const auto rank = binio::get<std::uint8_t>(is, "tensor rank");
    for (int r = 0; r < rank; ++r) t.shape.push_back(binio::get<std::uint32_t>(is, "tensor dims"));
    if (t.numel() > (std::size_t{1} << 28)) throw FormatError("tensor '" + t.name + "' is implausibly large");
    t.values.resize(t.numel());
    binio::get_floats(is, t.values, t.name);
    c.tensors.push_back(std::move(t));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in '" + path.string() + "'");
  return c;
}

}  // namespace detail

std::size_t serialized_size(const ModelWeights& weights) {
  std::size_t n = 4 + 4 + 16 + 4;
  for (const auto& t : weights.tensors) n += 2 + t.name.size() + 1 + 4 * t.shape.size() + 4 * t.values.size();
  return n;
}

void save_weights(const ModelWeights& weights, const fs::path& path) {
  detail::write_container(path, kWeightMagic, {weights.config, weights.tensors});
}

ModelWeights load_weights(const fs::path& path) {
  auto c = detail::read_container(path, kWeightMagic);
  ModelWeights w{c.config, std::move(c.tensors)};
  w.validate();
  return w;
}

}  // namespace photocon
