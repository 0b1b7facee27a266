// Copyright 2026 The DGNet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Joint SGD training of network and router parameters, checkpoints, metrics,
// and multi-seed comparisons between connectivity mechanisms.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dgnet/data.hpp"
#include "dgnet/model.hpp"

namespace dgnet {

struct TrainConfig {
  std::size_t epochs = 64;
  std::size_t batch_size = 128;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double smoothing = 0.1;
  double warmup_epochs = 2.0;
  std::uint64_t seed = 0;
  bool freeze_alpha = false;  // static_alpha: keep edge scalars at their initial value
  bool eval_pruned = false;   // dynamic: evaluate with thresholded pruned inference

  void check() const;
};

/// Linear warmup from 0 to the base rate, then a half-period cosine decay
/// to 0 at `total_steps`.
struct LrSchedule {
  double base = 0.1;
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 1;

  double at(std::size_t step) const;
};

LrSchedule make_schedule(const TrainConfig& config, std::size_t steps_per_epoch);
double lr_at(std::size_t step, const TrainConfig& config, std::size_t steps_per_epoch);

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
struct TrainState {
  explicit TrainState(Network<T> net);

  Network<T> network;
  std::vector<Parameter<T>> params;
  std::vector<std::vector<T>> momentum;  // one slot per parameter
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  double best_metric = 0.0;
};

/// Forward, smoothed cross-entropy, backward, then SGD with momentum:
/// v <- mu*v + (g + wd*p), p <- p - lr*v. Static edge scalars are clamped to
/// [0,1] afterwards. Returns the loss before the update.
template <typename T>
double train_step(TrainState<T>& state, const Tensor<T>& batch, std::span<const int> labels,
                  const TrainConfig& config, double lr);

struct MetricRow {
  std::uint64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  std::optional<double> eval_acc;
};

std::string metrics_csv(std::span<const MetricRow> rows);
std::vector<MetricRow> parse_metrics_csv(const std::string& text);

/// Top-1 accuracy. With a policy, dynamic networks run pruned inference.
double evaluate(const Network<float>& network, const Dataset& data, std::size_t batch_size,
                const std::optional<ThresholdPolicy>& pruned = {});

struct RunResult {
  double eval_accuracy = 0.0;
  std::vector<MetricRow> metrics;
};

using ProgressFn = std::function<void(const MetricRow&)>;

/// Runs the remaining epochs of `config` on `state`, evaluating after every
/// epoch. Each epoch's sample order depends only on (seed, epoch).
RunResult run_training(TrainState<float>& state, const TrainConfig& config,
                       const DatasetSplit& data, const ThresholdPolicy& policy = {},
                       const ProgressFn& progress = {});

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<double> values;    // stored at the training precision
  std::vector<double> momentum;
};

struct Checkpoint {
  std::uint32_t scalar_bytes = 4;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  double best_metric = 0.0;
  std::string config_text;
  std::vector<CheckpointEntry> entries;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const TrainState<T>& state,
                     const std::string& config_text);
Checkpoint read_checkpoint(const std::filesystem::path& path);
/// Copies values and momentum into `state`; names and shapes must match.
template <typename T>
void restore_checkpoint(TrainState<T>& state, const Checkpoint& checkpoint);

struct Arm {
  std::string label;
  ModelConfig model;
};

struct ArmResult {
  std::string label;
  std::vector<double> accuracies;  // one per seed
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation
  std::uint64_t multiadds = 0;
  std::uint64_t params = 0;
};

struct ComparisonReport {
  std::vector<ArmResult> arms;
  const ArmResult& arm(const std::string& label) const;
  std::string table() const;
};

using ArmProgressFn = std::function<void(const std::string& arm, std::uint64_t seed, double acc)>;

ComparisonReport compare_arms(std::span<const Arm> arms, const TrainConfig& config,
                              const DatasetSplit& data, std::span<const std::uint64_t> seeds,
                              const ThresholdPolicy& policy = {},
                              const ArmProgressFn& progress = {});

/// baseline (fixed wiring `baseline_pattern`), static_alpha and dynamic (both
/// on `base.pattern`).
std::vector<Arm> ablation_arms(const ModelConfig& base, const WiringPattern& baseline_pattern);

/// Static ER(p=0.2), BA(m=5), WS(k=4, p=0.75) wirings and the dynamic
/// complete-graph model, all with the node and channel budget of `base`.
std::vector<Arm> randwire_arms(const ModelConfig& base, std::uint64_t graph_seed);

extern template struct TrainState<float>;
extern template struct TrainState<double>;

}  // namespace dgnet
