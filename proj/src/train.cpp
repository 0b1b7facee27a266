// Copyright 2026 The DGNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "dgnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "dgnet/ops.hpp"

namespace dgnet {

void TrainConfig::check() const {
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(smoothing >= 0.0 && smoothing < 1.0)) {
    throw std::invalid_argument("label smoothing must lie in [0,1)");
  }
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("momentum must lie in [0,1)");
  if (weight_decay < 0.0 || warmup_epochs < 0.0) {
    throw std::invalid_argument("weight decay and warmup must be non-negative");
  }
}

double LrSchedule::at(std::size_t step) const {
  if (step < warmup_steps) {
    return base * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  const std::size_t span = total_steps > warmup_steps ? total_steps - warmup_steps : 1;
  const double t = std::min(static_cast<double>(step - warmup_steps) / static_cast<double>(span), 1.0);
  return 0.5 * base * (1.0 + std::cos(std::numbers::pi * t));
}

LrSchedule make_schedule(const TrainConfig& config, std::size_t steps_per_epoch) {
  LrSchedule schedule;
  schedule.base = config.lr;
  schedule.total_steps = std::max<std::size_t>(config.epochs * steps_per_epoch, 1);
  schedule.warmup_steps = std::min(
      static_cast<std::size_t>(std::llround(config.warmup_epochs * static_cast<double>(steps_per_epoch))),
      schedule.total_steps);
  return schedule;
}

double lr_at(std::size_t step, const TrainConfig& config, std::size_t steps_per_epoch) {
  return make_schedule(config, steps_per_epoch).at(step);
}

template <typename T>
TrainState<T>::TrainState(Network<T> net) : network(std::move(net)) {
  params = network.parameters();
  for (const auto& p : params) momentum.emplace_back(p.tensor.numel(), T(0));
}

template <typename T>
double train_step(TrainState<T>& state, const Tensor<T>& batch, std::span<const int> labels,
                  const TrainConfig& config, double lr) {
  if (batch.dim(0) != labels.size()) {
    throw std::invalid_argument("batch has " + std::to_string(batch.dim(0)) + " samples but " +
                                std::to_string(labels.size()) + " labels");
  }
  Tape<T> tape;
  auto logits = state.network.forward(tape, batch);
  auto loss = ops::cross_entropy_smoothed(tape, logits, labels, config.smoothing);
  for (auto& p : state.params) p.tensor.clear_grad();
  tape.backward(loss);

  const double loss_value = static_cast<double>(loss.item());
  if (!std::isfinite(loss_value)) {
    double max_grad = 0.0;
    for (const auto& p : state.params) {
      if (!p.tensor.has_grad()) continue;
      for (T g : p.tensor.grad()) {
        const double a = std::abs(static_cast<double>(g));
        if (!(a <= max_grad)) max_grad = a;  // lets NaN through
      }
    }
    char msg[160];
    std::snprintf(msg, sizeof msg, "non-finite loss at step %llu (lr=%.6g, max |grad|=%.6g)",
                  static_cast<unsigned long long>(state.step), lr, max_grad);
    throw NonFiniteLoss(msg);
  }

  const T mu = static_cast<T>(config.momentum);
  const T wd = static_cast<T>(config.weight_decay);
  const T rate = static_cast<T>(lr);
  for (std::size_t k = 0; k < state.params.size(); ++k) {
    auto& p = state.params[k];
    if (p.group == ParamGroup::alpha && config.freeze_alpha) continue;
    if (!p.tensor.has_grad()) continue;
    auto value = p.tensor.mutable_data();
    auto grad = p.tensor.grad();
    auto& velocity = state.momentum[k];
    for (std::size_t i = 0; i < value.size(); ++i) {
      T g = grad[i];
      if (p.decay) g += wd * value[i];
      velocity[i] = mu * velocity[i] + g;
      value[i] -= rate * velocity[i];
    }
    if (p.group == ParamGroup::alpha) {
      for (T& v : value) v = std::clamp(v, T(0), T(1));
    }
  }
  ++state.step;
  return loss_value;
}

namespace {

std::string format_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string metrics_csv(std::span<const MetricRow> rows) {
  std::string out = "step,lr,loss,eval_acc\n";
  for (const auto& r : rows) {
    out += std::to_string(r.step) + "," + format_double(r.lr) + "," + format_double(r.loss) + ",";
    if (r.eval_acc) out += format_double(*r.eval_acc);
    out += "\n";
  }
  return out;
}

std::vector<MetricRow> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<MetricRow> rows;
  std::getline(in, line);
  if (line != "step,lr,loss,eval_acc") throw std::invalid_argument("unexpected metrics header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string step, lr, loss, acc;
    std::getline(fields, step, ',');
    std::getline(fields, lr, ',');
    std::getline(fields, loss, ',');
    std::getline(fields, acc, ',');
    MetricRow row{std::stoull(step), std::stod(lr), std::stod(loss), std::nullopt};
    if (!acc.empty()) row.eval_acc = std::stod(acc);
    rows.push_back(row);
  }
  return rows;
}

double evaluate(const Network<float>& network, const Dataset& data, std::size_t batch_size,
                const std::optional<ThresholdPolicy>& pruned) {
  Tape<float> tape(false);
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(start + batch_size, data.size()); ++i) idx.push_back(i);
    const auto batch = data.gather(idx);
    Tensor<float> logits;
    if (pruned && network.mode() == ConnectivityMode::dynamic) {
      logits = pruned_forward(network, batch, *pruned, PrunedExecution::skip).logits;
    } else {
      logits = network.forward(tape, batch);
    }
    const std::size_t k = logits.dim(1);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const float* row = logits.data().data() + b * k;
      const auto pred = static_cast<int>(std::max_element(row, row + k) - row);
      if (pred == data.labels[idx[b]]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

RunResult run_training(TrainState<float>& state, const TrainConfig& config,
                       const DatasetSplit& data, const ThresholdPolicy& policy,
                       const ProgressFn& progress) {
  config.check();
  const std::size_t n = data.train.size();
  const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const LrSchedule schedule = make_schedule(config, steps_per_epoch);
  const std::optional<ThresholdPolicy> eval_policy =
      config.eval_pruned ? std::optional<ThresholdPolicy>(policy) : std::nullopt;

  RunResult result;
  std::vector<std::size_t> order(n);
  std::vector<std::size_t> idx;
  std::vector<int> labels;
  for (; state.epoch < config.epochs; ++state.epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(config.seed * 1000003ULL + state.epoch);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      idx.assign(order.begin() + start, order.begin() + std::min(start + config.batch_size, n));
      labels.clear();
      for (std::size_t i : idx) labels.push_back(data.train.labels[i]);
      const double lr = schedule.at(state.step);
      MetricRow row{state.step, lr, 0.0, std::nullopt};
      row.loss = train_step(state, data.train.gather(idx), labels, config, lr);
      if (start + config.batch_size >= n) {
        row.eval_acc = evaluate(state.network, data.eval, config.batch_size, eval_policy);
        result.eval_accuracy = *row.eval_acc;
        state.best_metric = std::max(state.best_metric, *row.eval_acc);
      }
      if (progress) progress(row);
      result.metrics.push_back(row);
    }
  }
  if (result.metrics.empty()) {
    result.eval_accuracy = evaluate(state.network, data.eval, config.batch_size, eval_policy);
  }
  return result;
}

namespace {

constexpr char kMagic[8] = {'D', 'G', 'N', 'E', 'T', 'C', 'K', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename V>
void put(std::ostream& out, const V& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename V>
V get(std::istream& in) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw std::runtime_error("checkpoint truncated");
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const auto n = get<std::uint64_t>(in);
  if (n > (1ULL << 32)) throw std::runtime_error("checkpoint string too long");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error("checkpoint truncated");
  return s;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const TrainState<T>& state,
                     const std::string& config_text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, sizeof(T));
  put<std::uint64_t>(out, state.step);
  put<std::uint64_t>(out, state.epoch);
  put<double>(out, state.best_metric);
  put_string(out, config_text);
  put<std::uint64_t>(out, state.params.size());
  for (std::size_t k = 0; k < state.params.size(); ++k) {
    const auto& p = state.params[k];
    put_string(out, p.name);
    put<std::uint64_t>(out, p.tensor.rank());
    for (std::size_t d : p.tensor.shape()) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(p.tensor.data().data()),
              static_cast<std::streamsize>(p.tensor.numel() * sizeof(T)));
    out.write(reinterpret_cast<const char*>(state.momentum[k].data()),
              static_cast<std::streamsize>(state.momentum[k].size() * sizeof(T)));
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

namespace {

template <typename T>
std::vector<double> read_values(std::istream& in, std::size_t n) {
  std::vector<T> raw(n);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * sizeof(T)));
  if (!in) throw std::runtime_error("checkpoint truncated");
  return std::vector<double>(raw.begin(), raw.end());
}

}  // namespace

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw std::runtime_error(path.string() + " is not a checkpoint");
  }
  if (get<std::uint32_t>(in) != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version");
  }
  Checkpoint ck;
  ck.scalar_bytes = get<std::uint32_t>(in);
  if (ck.scalar_bytes != 4 && ck.scalar_bytes != 8) throw std::runtime_error("bad scalar width");
  ck.step = get<std::uint64_t>(in);
  ck.epoch = get<std::uint64_t>(in);
  ck.best_metric = get<double>(in);
  ck.config_text = get_string(in);
  const auto count = get<std::uint64_t>(in);
  for (std::uint64_t k = 0; k < count; ++k) {
    CheckpointEntry e;
    e.name = get_string(in);
    const auto rank = get<std::uint64_t>(in);
    if (rank == 0 || rank > 8) throw std::runtime_error("bad tensor rank in checkpoint");
    for (std::uint64_t d = 0; d < rank; ++d) e.shape.push_back(get<std::uint64_t>(in));
    const std::size_t n = shape_numel(e.shape);
    if (ck.scalar_bytes == 4) {
      e.values = read_values<float>(in, n);
      e.momentum = read_values<float>(in, n);
    } else {
      e.values = read_values<double>(in, n);
      e.momentum = read_values<double>(in, n);
    }
    ck.entries.push_back(std::move(e));
  }
  return ck;
}

template <typename T>
void restore_checkpoint(TrainState<T>& state, const Checkpoint& checkpoint) {
  if (checkpoint.entries.size() != state.params.size()) {
    throw std::runtime_error("checkpoint holds " + std::to_string(checkpoint.entries.size()) +
                             " tensors, model has " + std::to_string(state.params.size()));
  }
  for (std::size_t k = 0; k < state.params.size(); ++k) {
    const auto& e = checkpoint.entries[k];
    auto& p = state.params[k];
    if (e.name != p.name || e.shape != p.tensor.shape()) {
      throw std::runtime_error("checkpoint tensor " + e.name + " " + shape_string(e.shape) +
                               " does not match " + p.name + " " +
                               shape_string(p.tensor.shape()));
    }
    auto value = p.tensor.mutable_data();
    for (std::size_t i = 0; i < value.size(); ++i) {
      value[i] = static_cast<T>(e.values[i]);
      state.momentum[k][i] = static_cast<T>(e.momentum[i]);
    }
  }
  state.step = checkpoint.step;
  state.epoch = checkpoint.epoch;
  state.best_metric = checkpoint.best_metric;
}

const ArmResult& ComparisonReport::arm(const std::string& label) const {
  for (const auto& a : arms) {
    if (a.label == label) return a;
  }
  throw std::out_of_range("no arm named " + label);
}

std::string ComparisonReport::table() const {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-14s %10s %10s %14s %10s  %s\n", "arm", "mean_acc", "std",
                "multiadds", "params", "per_seed");
  out << line;
  for (const auto& a : arms) {
    std::string seeds;
    for (double acc : a.accuracies) seeds += format_double(acc) + " ";
    std::snprintf(line, sizeof line, "%-14s %10.4f %10.4f %14llu %10llu  %s\n", a.label.c_str(),
                  a.mean, a.stddev, static_cast<unsigned long long>(a.multiadds),
                  static_cast<unsigned long long>(a.params), seeds.c_str());
    out << line;
  }
  return out.str();
}

ComparisonReport compare_arms(std::span<const Arm> arms, const TrainConfig& config,
                              const DatasetSplit& data, std::span<const std::uint64_t> seeds,
                              const ThresholdPolicy& policy, const ArmProgressFn& progress) {
  ComparisonReport report;
  const Shape input(data.train.images.shape().begin() + 1, data.train.images.shape().end());
  for (const Arm& arm : arms) {
    ArmResult result;
    result.label = arm.label;
    for (std::uint64_t seed : seeds) {
      TrainConfig run = config;
      run.seed = seed;
      TrainState<float> state(Network<float>(arm.model, seed));
      if (result.accuracies.empty()) {
        const CostReport cost = count_cost(state.network, input);
        result.multiadds = cost.multiadds_total;
        result.params = cost.params;
      }
      const double acc = run_training(state, run, data, policy).eval_accuracy;
      result.accuracies.push_back(acc);
      if (progress) progress(arm.label, seed, acc);
    }
    const double n = static_cast<double>(result.accuracies.size());
    result.mean = std::accumulate(result.accuracies.begin(), result.accuracies.end(), 0.0) / n;
    double ss = 0.0;
    for (double a : result.accuracies) ss += (a - result.mean) * (a - result.mean);
    result.stddev = result.accuracies.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    report.arms.push_back(std::move(result));
  }
  return report;
}

std::vector<Arm> ablation_arms(const ModelConfig& base, const WiringPattern& baseline_pattern) {
  std::vector<Arm> arms;
  ModelConfig baseline = base;
  baseline.mode = ConnectivityMode::baseline;
  baseline.pattern = baseline_pattern;
  arms.push_back({"baseline", baseline});
  ModelConfig alpha = base;
  alpha.mode = ConnectivityMode::static_alpha;
  arms.push_back({"static_alpha", alpha});
  ModelConfig dynamic = base;
  dynamic.mode = ConnectivityMode::dynamic;
  arms.push_back({"dynamic", dynamic});
  return arms;
}

std::vector<Arm> randwire_arms(const ModelConfig& base, std::uint64_t graph_seed) {
  std::vector<Arm> arms;
  auto add_static = [&](const std::string& label, WiringPattern pattern) {
    ModelConfig model = base;
    model.mode = ConnectivityMode::baseline;
    pattern.seed = graph_seed;
    model.pattern = pattern;
    arms.push_back({label, model});
  };
  add_static("er_p0.2", WiringPattern{PatternKind::er, 0.2, 5, 4, 0});
  add_static("ba_m5", WiringPattern{PatternKind::ba, 0.2, 5, 4, 0});
  add_static("ws_k4_p0.75", WiringPattern{PatternKind::ws, 0.75, 5, 4, 0});
  ModelConfig dynamic = base;
  dynamic.mode = ConnectivityMode::dynamic;
  dynamic.pattern = WiringPattern{PatternKind::complete, 0.2, 5, 4, 0};
  arms.push_back({"dynamic", dynamic});
  return arms;
}

template struct TrainState<float>;
template struct TrainState<double>;
template double train_step(TrainState<float>&, const Tensor<float>&, std::span<const int>,
                           const TrainConfig&, double);
template double train_step(TrainState<double>&, const Tensor<double>&, std::span<const int>,
                           const TrainConfig&, double);
template void save_checkpoint(const std::filesystem::path&, const TrainState<float>&,
                              const std::string&);
template void save_checkpoint(const std::filesystem::path&, const TrainState<double>&,
                              const std::string&);
template void restore_checkpoint(TrainState<float>&, const Checkpoint&);
template void restore_checkpoint(TrainState<double>&, const Checkpoint&);

}  // namespace dgnet
