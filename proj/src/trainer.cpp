#include "photocon/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "photocon/detail/container.hpp"
#include "photocon/detail/objective.hpp"
#include "photocon/error.hpp"
#include "photocon/parallel.hpp"
#include "photocon/random.hpp"

namespace photocon {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kAdamMagic = "PADM";

// Seed streams.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kBatchStream = 2;
constexpr std::uint64_t kAuxStream = 3;

void add_scaled(LossBreakdown& acc, const LossBreakdown& x, double s) {
  auto add = [s](LossTerms& a, const LossTerms& b) {
    a.triplet += s * b.triplet;
    a.intra += s * b.intra;
    a.scale += s * b.scale;
    a.mc += s * b.mc;
    a.rot += s * b.rot;
  };
  add(acc.raw, x.raw);
  add(acc.weighted, x.weighted);
  acc.total += s * x.total;
}

void check_finite(const LossBreakdown& b, long long step) {
  const std::pair<const char*, double> terms[] = {{"triplet", b.raw.triplet}, {"intra", b.raw.intra},
                                                  {"scale", b.raw.scale},     {"mc", b.raw.mc},
                                                  {"rot", b.raw.rot},         {"total", b.total}};
  for (const auto& [name, v] : terms)
    if (!std::isfinite(v))
      throw NumericError("non-finite loss at step " + std::to_string(step) + " (term " + name + ")");
}

void write_log_header(std::ostream& os) { os << "step,loss_total,loss_triplet,loss_intra,loss_scale,loss_mc,loss_rot\n"; }

void write_log_row(std::ostream& os, const StepLog& row) {
  char buf[256];
  const auto& r = row.loss.raw;
  std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", row.step, row.loss.total, r.triplet, r.intra,
                r.scale, r.mc, r.rot);
  os << buf;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1 || epoch_size < 1 || epochs < 1 || checkpoint_interval < 1)
    throw UsageError("batch_size, epoch_size, epochs and checkpoint_interval must be >= 1");
  if (!(learning_rate > 0.0)) throw UsageError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw UsageError("Adam betas must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) throw UsageError("Adam epsilon must be positive");
  loss.validate();
  network.validate();
}

void adam_update(std::vector<float>& params, const std::vector<float>& grad, AdamState& state,
                 const TrainConfig& config) {
  if (grad.size() != params.size()) throw FormatError("gradient length does not match parameters");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0f);
    state.v.assign(params.size(), 0.0f);
  }
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw FormatError("Adam state length does not match parameters");
  ++state.step;
  const auto t = static_cast<double>(state.step);
  const float b1 = static_cast<float>(config.beta1), b2 = static_cast<float>(config.beta2);
  const float c1 = static_cast<float>(1.0 - std::pow(config.beta1, t));
  const float c2 = static_cast<float>(1.0 - std::pow(config.beta2, t));
  const float lr = static_cast<float>(config.learning_rate), eps = static_cast<float>(config.adam_epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = b1 * state.m[i] + (1.0f - b1) * grad[i];
    state.v[i] = b2 * state.v[i] + (1.0f - b2) * grad[i] * grad[i];
    const float mhat = state.m[i] / c1;
    const float vhat = state.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

LossBreakdown batch_gradient(const ModelWeights& weights, const TripletArchive& archive,
                             const std::vector<std::size_t>& indices, const std::vector<std::uint64_t>& aux_seeds,
                             const LossWeights& lw, std::vector<float>& grad, int threads) {
  if (indices.empty() || indices.size() != aux_seeds.size()) throw UsageError("batch indices and seeds must match");
  const detail::Engine<float> net(detail::make_layout(weights.config, weights.in_channels()));
  const auto params = weights.flatten();
  const int n = static_cast<int>(indices.size());
  std::vector<std::vector<float>> grads(n);
  std::vector<LossBreakdown> losses(n);
  parallel_for(n, threads, [&](int i) {
    grads[i].assign(params.size(), 0.0f);
    const auto in = detail::to_planar_input<float>(archive.triplets.at(indices[i]));
    losses[i] = detail::triplet_objective<float>(net, params, in, lw, draw_aux(aux_seeds[i]), grads[i]);
  });
  grad.assign(params.size(), 0.0f);
  LossBreakdown mean;
  const float inv = 1.0f / static_cast<float>(n);
  for (int i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += grads[i][j];
    add_scaled(mean, losses[i], 1.0 / n);
  }
  for (auto& g : grad) g *= inv;
  return mean;
}

void save_adam_state(const AdamState& state, const ModelWeights& like, const fs::path& path) {
  if (state.m.size() != like.parameter_count() || state.v.size() != like.parameter_count())
    throw FormatError("Adam state does not match the weights");
  detail::TensorContainer c{like.config, {}};
  for (const char* prefix : {"m.", "v."}) {
    const auto& src = prefix[0] == 'm' ? state.m : state.v;
    std::size_t off = 0;
    for (const auto& t : like.tensors) {
      c.tensors.push_back({prefix + t.name, t.shape,
                           std::vector<float>(src.begin() + static_cast<std::ptrdiff_t>(off),
                                              src.begin() + static_cast<std::ptrdiff_t>(off + t.values.size()))});
      off += t.values.size();
    }
  }
  // Step count split into 16-bit halves so it stays exact in f32.
  c.tensors.push_back({"step", {2},
                       {static_cast<float>(state.step & 0xffff), static_cast<float>(state.step >> 16)}});
  detail::write_container(path, kAdamMagic, c);
}

AdamState load_adam_state(const fs::path& path, const ModelWeights& like) {
  const auto c = detail::read_container(path, kAdamMagic);
  if (!(c.config == like.config)) throw FormatError("Adam state '" + path.string() + "' belongs to another network");
  const std::size_t nt = like.tensors.size();
  if (c.tensors.size() != 2 * nt + 1) throw FormatError("Adam state '" + path.string() + "' has the wrong tensor count");
  AdamState s;
  for (std::size_t i = 0; i < 2 * nt; ++i) {
    const auto& src = like.tensors[i % nt];
    const auto& t = c.tensors[i];
    if (t.name != (i < nt ? "m." : "v.") + src.name || t.shape != src.shape)
      throw FormatError("Adam state tensor '" + t.name + "' does not match the weights");
    auto& dst = i < nt ? s.m : s.v;
    dst.insert(dst.end(), t.values.begin(), t.values.end());
  }
  const auto& st = c.tensors.back();
  if (st.name != "step" || st.values.size() != 2) throw FormatError("Adam state lacks a step counter");
  s.step = static_cast<long long>(st.values[0]) + (static_cast<long long>(st.values[1]) << 16);
  return s;
}

ModelWeights initial_weights(const TrainConfig& config, int in_channels) {
  return init_weights(config.network, in_channels, derive_seed(config.seed, kInitStream));
}

TrainResult train(const TripletArchive& archive, const TrainConfig& config, const fs::path& out_dir,
                  const TrainOptions& options) {
  config.validate();
  if (archive.triplets.empty()) throw DataError("training archive is empty");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw DataError("cannot create output directory '" + out_dir.string() + "'");

  TrainResult res;
  res.weights = initial_weights(config, static_cast<int>(archive.channels));
  const fs::path ckpt_w = out_dir / "checkpoint.phit", ckpt_a = out_dir / "checkpoint.padm";
  const fs::path log_path = out_dir / "log.csv";
  bool resumed = false;
  if (options.resume && fs::exists(ckpt_w) && fs::exists(ckpt_a)) {
    auto w = load_weights(ckpt_w);
    if (!(w.config == config.network) || w.in_channels() != static_cast<int>(archive.channels))
      throw UsageError("checkpoint in '" + out_dir.string() + "' does not match the configured network");
    res.adam = load_adam_state(ckpt_a, w);
    res.weights = std::move(w);
    resumed = true;
  }

  // Rows past the checkpoint belong to an interrupted run and are replayed.
  std::vector<std::string> kept;
  if (resumed) {
    std::ifstream is(log_path);
    std::string line;
    for (bool first = true; std::getline(is, line); first = false)
      if (!first && !line.empty() && std::stoll(line) <= res.adam.step) kept.push_back(line);
  }
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw DataError("cannot write '" + log_path.string() + "'");
  write_log_header(log);
  for (const auto& line : kept) log << line << '\n';

  auto params = res.weights.flatten();
  std::vector<float> grad;
  std::vector<std::size_t> idx(config.batch_size);
  std::vector<std::uint64_t> aux(config.batch_size);
  const long long total = config.total_steps();
  for (long long step = res.adam.step + 1; step <= total; ++step) {
    Rng rng(derive_seed(config.seed, kBatchStream, static_cast<std::uint64_t>(step)));
    std::uniform_int_distribution<std::size_t> pick(0, archive.triplets.size() - 1);
    for (int i = 0; i < config.batch_size; ++i) {
      idx[i] = pick(rng);
      aux[i] = derive_seed(derive_seed(config.seed, kAuxStream, static_cast<std::uint64_t>(step)), i);
    }
    StepLog row{step, batch_gradient(res.weights, archive, idx, aux, config.loss, grad, options.threads)};
    check_finite(row.loss, step);
    adam_update(params, grad, res.adam, config);
    res.weights.assign(params);
    write_log_row(log, row);
    if (options.on_step) options.on_step(row);
    res.log.push_back(row);

    if (step % config.epoch_size == 0) {
      const long long epoch = step / config.epoch_size;
      if (epoch % config.checkpoint_interval == 0 || step == total) {
        log.flush();
        save_weights(res.weights, out_dir / ("weights_epoch" + std::to_string(epoch) + ".phit"));
        save_weights(res.weights, ckpt_w);
        save_adam_state(res.adam, res.weights, ckpt_a);
      }
    }
  }
  log.flush();
  save_weights(res.weights, out_dir / "weights.phit");
  return res;
}

LossBreakdown evaluate_loss(const TripletArchive& archive, const ModelWeights& weights, const LossWeights& lw,
                            std::uint64_t seed, int threads) {
  lw.validate();
  if (archive.triplets.empty()) throw DataError("evaluation archive is empty");
  const detail::Engine<float> net(detail::make_layout(weights.config, weights.in_channels()));
  const auto params = weights.flatten();
  const int n = static_cast<int>(archive.triplets.size());
  std::vector<LossBreakdown> losses(n);
  parallel_for(n, threads, [&](int i) {
    const auto in = detail::to_planar_input<float>(archive.triplets[i]);
    losses[i] = detail::triplet_objective<float>(net, params, in, lw, draw_aux(derive_seed(seed, i)), {}, true);
  });
  LossBreakdown mean;
  for (const auto& l : losses) add_scaled(mean, l, 1.0 / n);
  return mean;
}

}  // namespace photocon
