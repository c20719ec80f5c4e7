#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "photocon/dataset.hpp"
#include "photocon/losses.hpp"
#include "photocon/network.hpp"

namespace photocon {

struct TrainConfig {
  int batch_size = 16;
  int epoch_size = 1000;  // steps per epoch
  int epochs = 75;
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  LossWeights loss;
  NetworkConfig network;
  std::uint64_t seed = 0;
  int checkpoint_interval = 1;  // epochs

  void validate() const;
  long long total_steps() const noexcept { return static_cast<long long>(epochs) * epoch_size; }
};

/// Adam moments, one entry per parameter in flatten() order.
struct AdamState {
  std::vector<float> m;
  std::vector<float> v;
  long long step = 0;

  bool operator==(const AdamState&) const = default;
};

/// Batch-mean losses after one step.
struct StepLog {
  long long step = 0;
  LossBreakdown loss;
};

/// One Adam update in place. Exposed so the update rule can be checked alone.
void adam_update(std::vector<float>& params, const std::vector<float>& grad, AdamState& state,
                 const TrainConfig& config);

/// Batch-mean loss and gradient for explicit triplet indices and aux seeds.
LossBreakdown batch_gradient(const ModelWeights& weights, const TripletArchive& archive,
                             const std::vector<std::size_t>& indices, const std::vector<std::uint64_t>& aux_seeds,
                             const LossWeights& lw, std::vector<float>& grad, int threads = 1);

struct TrainOptions {
  int threads = 1;
  // Continue from out_dir/checkpoint.phit + checkpoint.padm when present.
  bool resume = false;
  std::function<void(const StepLog&)> on_step;
};

struct TrainResult {
  ModelWeights weights;
  AdamState adam;
  std::vector<StepLog> log;  // steps run by this call
};

/// Weights a fresh (not resumed) run starts from.
ModelWeights initial_weights(const TrainConfig& config, int in_channels);

/// Writes log.csv, checkpoint.{phit,padm} and weights_epoch<N>.phit every
/// checkpoint_interval epochs, and weights.phit at the end.
TrainResult train(const TripletArchive& archive, const TrainConfig& config, const std::filesystem::path& out_dir,
                  const TrainOptions& options = {});

void save_adam_state(const AdamState& state, const ModelWeights& like, const std::filesystem::path& path);
AdamState load_adam_state(const std::filesystem::path& path, const ModelWeights& like);

/// Per-term means over the archive, all terms evaluated; aux draws are
/// derived from `seed` and the triplet index. No parameters change.
LossBreakdown evaluate_loss(const TripletArchive& archive, const ModelWeights& weights, const LossWeights& lw,
                            std::uint64_t seed = 0, int threads = 1);

}  // namespace photocon
