// Copyright 2026 The DGNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "dgnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "dgnet/ops.hpp"

namespace dgnet {

std::string to_string(ConnectivityMode mode) {
  switch (mode) {
    case ConnectivityMode::baseline: return "baseline";
    case ConnectivityMode::static_alpha: return "static_alpha";
    case ConnectivityMode::dynamic: return "dynamic";
  }
  return "?";
}

ConnectivityMode parse_connectivity_mode(std::string_view name) {
  for (auto mode : {ConnectivityMode::baseline, ConnectivityMode::static_alpha,
                    ConnectivityMode::dynamic}) {
    if (to_string(mode) == name) return mode;
  }
  throw std::invalid_argument("unknown connectivity mode '" + std::string(name) + "'");
}

void ModelConfig::check() const {
  if (in_channels == 0 || classes < 2 || kernel == 0 || kernel % 2 == 0) {
    throw std::invalid_argument("model needs input channels, >= 2 classes and an odd kernel");
  }
  if (stages.empty()) throw std::invalid_argument("model needs at least one stage");
  for (const StageSpec& s : stages) {
    if (s.nodes < 2 || s.channels == 0 || s.stride == 0) {
      throw std::invalid_argument("each stage needs >= 2 nodes, channels and a positive stride");
    }
    if (norm_groups != 0 && s.channels % norm_groups != 0) {
      throw std::invalid_argument("norm_groups " + std::to_string(norm_groups) +
                                  " does not divide stage width " + std::to_string(s.channels));
    }
  }
}

namespace {

constexpr std::uint64_t kAuxSeedMix = 0x9E3779B97F4A7C15ULL;

template <typename T>
Tensor<T> scaled_normal(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  Tensor<T> t(std::move(shape), T(0), true);
  // Gain 1, and callers fold the number of summed inputs into fan_in.
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (T& v : t.mutable_data()) v = static_cast<T>(normal(rng));
  return t;
}

}  // namespace

template <typename T>
Network<T>::Network(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.check();
  std::mt19937_64 net_rng(seed);
  std::mt19937_64 aux_rng(seed ^ kAuxSeedMix);
  const std::size_t k = config_.kernel;
  std::size_t in_ch = config_.in_channels;
  std::size_t in_terms = 1;  // tensors summed into the previous stage's output

  for (std::size_t s = 0; s < config_.stages.size(); ++s) {
    const StageSpec& spec = config_.stages[s];
    WiringPattern pattern = config_.pattern;
    if (is_random(pattern.kind)) pattern.seed += s;

    Stage<T> stage;
    stage.graph = pattern_edges(pattern, spec.nodes);
    stage.channels = spec.channels;
    const std::size_t n = spec.nodes;
    for (std::size_t j = 1; j <= n; ++j) {
      NodeBlock<T> block;
      block.role = j == 1 ? NodeRole::input : (j == n ? NodeRole::output : NodeRole::interior);
      if (block.role != NodeRole::output) {
        const std::size_t cin = j == 1 ? in_ch : spec.channels;
        // Normalized nodes are scale-invariant in the kernel; no in-degree correction.
        const std::size_t terms = config_.norm_groups != 0 ? 1
                                  : j == 1 ? in_terms
                                           : std::max<std::size_t>(stage.graph.predecessors(j).size(), 1);
        block.kernel = scaled_normal<T>(Shape{spec.channels, cin, k, k}, cin * k * k * terms, net_rng);
        block.bias = Tensor<T>(Shape{spec.channels}, T(0), true);
        if (config_.norm_groups != 0) {
          block.norm_groups = config_.norm_groups;
          block.norm_scale = Tensor<T>(Shape{spec.channels}, T(1), true);
          block.norm_shift = Tensor<T>(Shape{spec.channels}, T(0), true);
        }
        block.stride = j == 1 ? spec.stride : 1;
        block.padding = k / 2;
      }
      block.targets = stage.graph.successors(j);
      if (config_.mode == ConnectivityMode::dynamic && !block.targets.empty()) {
        block.router =
            Router<T>(spec.channels, block.targets.size(), config_.router_init, aux_rng);
      }
      stage.nodes.push_back(std::move(block));
    }
    if (config_.mode == ConnectivityMode::static_alpha) {
      for (const Edge& e : stage.graph.edges()) {
        stage.alpha.emplace(e, Tensor<T>(Shape{1, 1}, static_cast<T>(config_.alpha_init), true));
      }
    }
    in_terms = std::max<std::size_t>(stage.graph.predecessors(n).size(), 1);
    stages_.push_back(std::move(stage));
    in_ch = spec.channels;
  }

  head_weight_ = Tensor<T>(Shape{in_ch, config_.classes}, T(0), true);
  std::normal_distribution<double> normal(0.0, std::sqrt(1.0 / static_cast<double>(in_ch * in_terms)));
  for (T& v : head_weight_.mutable_data()) v = static_cast<T>(normal(net_rng));
  head_bias_ = Tensor<T>(Shape{config_.classes}, T(0), true);
}

template <typename T>
std::vector<Parameter<T>> Network<T>::parameters() const {
  std::vector<Parameter<T>> params;
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    const Stage<T>& stage = stages_[s];
    const std::string prefix = "stage" + std::to_string(s) + ".";
    for (std::size_t j = 1; j <= stage.nodes.size(); ++j) {
      const NodeBlock<T>& block = stage.node(j);
      const std::string node = prefix + "node" + std::to_string(j) + ".";
      if (block.kernel.defined()) {
        params.push_back({node + "kernel", block.kernel, ParamGroup::network, true});
        params.push_back({node + "bias", block.bias, ParamGroup::network, true});
        if (block.norm_groups != 0) {
          params.push_back({node + "norm.scale", block.norm_scale, ParamGroup::network, true});
          params.push_back({node + "norm.shift", block.norm_shift, ParamGroup::network, true});
        }
      }
      if (block.router) {
        params.push_back({node + "router.weight", block.router->weight(), ParamGroup::router,
                          true});
        params.push_back({node + "router.bias", block.router->bias(), ParamGroup::router,
                          false});
      }
    }
    for (const auto& [edge, alpha] : stage.alpha) {
      params.push_back({prefix + "alpha." + std::to_string(edge.from) + "-" +
                            std::to_string(edge.to),
                        alpha, ParamGroup::alpha, false});
    }
  }
  params.push_back({"head.weight", head_weight_, ParamGroup::network, true});
  params.push_back({"head.bias", head_bias_, ParamGroup::network, true});
  return params;
}

template <typename T>
Tensor<T> Network<T>::head(Tape<T>& tape, const Tensor<T>& features) const {
  return ops::fully_connected(tape, ops::global_avg_pool(tape, features), head_weight_,
                              head_bias_);
}

template <typename T>
Tensor<T> Network<T>::forward(Tape<T>& tape, const Tensor<T>& batch) const {
  if (config_.mode == ConnectivityMode::dynamic) return dynamic_forward(tape, *this, batch).logits;
  const auto wiring = own_wiring(*this);
  return static_forward<T>(tape, *this, batch, wiring);
}

template <typename T>
Tensor<T> node_transform(Tape<T>& tape, const NodeBlock<T>& block, const Tensor<T>& aggregate) {
  if (block.role == NodeRole::output) return aggregate;
  auto conv = ops::conv2d(tape, aggregate, block.kernel, block.stride, block.padding);
  auto pre = ops::add_channel_bias(tape, conv, block.bias);
  if (block.norm_groups != 0) {
    pre = ops::group_norm(tape, pre, block.norm_scale, block.norm_shift, block.norm_groups);
  }
  return ops::relu(tape, pre);
}

template <typename T>
StaticWiring<T> uniform_wiring(const StageGraph& graph, T value) {
  StaticWiring<T> wiring{graph, {}};
  for (const Edge& e : graph.edges()) wiring.weights.emplace(e, Tensor<T>(Shape{1, 1}, value));
  return wiring;
}

template <typename T>
std::vector<StaticWiring<T>> own_wiring(const Network<T>& network) {
  std::vector<StaticWiring<T>> wiring;
  for (const Stage<T>& stage : network.stages()) {
    switch (network.mode()) {
      case ConnectivityMode::baseline:
        wiring.push_back(uniform_wiring(stage.graph, T(1)));
        break;
      case ConnectivityMode::static_alpha:
        wiring.push_back({stage.graph, stage.alpha});
        break;
      case ConnectivityMode::dynamic:
        throw std::invalid_argument("dynamic networks have no static wiring");
    }
  }
  return wiring;
}

namespace {

template <typename T>
std::vector<Tensor<T>> sources_of(const std::vector<Tensor<T>>& outputs, std::size_t j,
                                  const std::vector<std::size_t>& preds) {
  std::vector<Tensor<T>> inputs(j - 1);
  for (std::size_t i : preds) inputs[i - 1] = outputs[i - 1];
  return inputs;
}

template <typename T>
Tensor<T> zeros_like(const Tensor<T>& t) {
  return Tensor<T>(t.shape());
}

template <typename T>
Tensor<T> static_stage(Tape<T>& tape, const Stage<T>& stage, const StaticWiring<T>& wiring,
                       const Tensor<T>& input) {
  const std::size_t n = stage.nodes.size();
  if (wiring.graph.node_count() != n) {
    throw std::invalid_argument("wiring has " + std::to_string(wiring.graph.node_count()) +
                                " nodes, stage has " + std::to_string(n));
  }
  std::vector<Tensor<T>> outputs(n);
  outputs[0] = node_transform(tape, stage.node(1), input);
  for (std::size_t j = 2; j <= n; ++j) {
    const auto preds = wiring.graph.predecessors(j);
    if (preds.empty()) {
      outputs[j - 1] = node_transform(tape, stage.node(j), zeros_like(outputs[0]));
      continue;
    }
    std::vector<std::optional<ops::ColumnRef<T>>> columns(j - 1);
    for (std::size_t i : preds) {
      auto it = wiring.weights.find(Edge{i, j});
      if (it == wiring.weights.end()) {
        throw std::invalid_argument("missing weight for edge (" + std::to_string(i) + "," +
                                    std::to_string(j) + ")");
      }
      if (it->second.numel() != 1 || it->second.rank() != 2) {
        throw ShapeError("edge weights must be [1,1] tensors");
      }
      columns[i - 1] = ops::ColumnRef<T>{it->second, 0};
    }
    auto weights = ops::gather_columns<T>(tape, columns, 1);
    auto inputs = sources_of(outputs, j, preds);
    auto aggregate = ops::weighted_sum<T>(tape, inputs, weights);
    outputs[j - 1] = node_transform(tape, stage.node(j), aggregate);
  }
  return outputs[n - 1];
}

template <typename T>
struct SoftStage {
  std::vector<Tensor<T>> outputs;
  AdjacencyBuffer<T> buffer;
};

template <typename T>
SoftStage<T> dynamic_stage(Tape<T>& tape, const Stage<T>& stage, const Tensor<T>& input) {
  const std::size_t n = stage.nodes.size();
  SoftStage<T> result{std::vector<Tensor<T>>(n), AdjacencyBuffer<T>(input.dim(0), n)};
  auto emit = [&](std::size_t j) {
    const NodeBlock<T>& block = stage.node(j);
    if (block.targets.empty()) return;
    if (!block.router) {
      throw std::invalid_argument("node " + std::to_string(j) + " has outgoing edges but no router");
    }
    auto weights = route(tape, *block.router, result.outputs[j - 1]);
    result.buffer.write_outgoing(j, weights, block.targets);
  };

  result.outputs[0] = node_transform(tape, stage.node(1), input);
  emit(1);
  for (std::size_t j = 2; j <= n; ++j) {
    const auto preds = stage.graph.predecessors(j);
    if (preds.empty()) {
      result.outputs[j - 1] = node_transform(tape, stage.node(j), zeros_like(result.outputs[0]));
    } else {
      auto row = result.buffer.read_incoming(tape, j, preds);
      auto inputs = sources_of(result.outputs, j, preds);
      auto aggregate = ops::weighted_sum<T>(tape, inputs, row);
      result.outputs[j - 1] = node_transform(tape, stage.node(j), aggregate);
    }
    emit(j);
  }
  return result;
}

}  // namespace

template <typename T>
Tensor<T> static_forward(Tape<T>& tape, const Network<T>& network, const Tensor<T>& batch,
                         std::span<const StaticWiring<T>> wiring) {
  if (wiring.size() != network.stages().size()) {
    throw std::invalid_argument("static_forward needs one wiring per stage");
  }
  Tensor<T> x = batch;
  for (std::size_t s = 0; s < wiring.size(); ++s) {
    x = static_stage(tape, network.stages()[s], wiring[s], x);
  }
  return network.head(tape, x);
}

template <typename T>
DynamicResult<T> dynamic_forward(Tape<T>& tape, const Network<T>& network, const Tensor<T>& batch) {
  DynamicResult<T> result;
  Tensor<T> x = batch;
  for (const Stage<T>& stage : network.stages()) {
    SoftStage<T> soft = dynamic_stage(tape, stage, x);
    x = soft.outputs.back();
    result.buffers.push_back(std::move(soft.buffer));
  }
  result.logits = network.head(tape, x);
  return result;
}

PrunedStage prune_for_inference(const StageGraph& graph, const AdjacencySnapshot& snapshot,
                                const ThresholdPolicy& policy) {
  const std::size_t n = graph.node_count();
  if (snapshot.nodes != n) throw std::invalid_argument("snapshot size does not match graph");

  std::set<Edge> open;
  for (const Edge& e : graph.edges()) {
    if (policy.mode == ThresholdMode::off ||
        snapshot.weight(e.from, e.to) >= policy.tau_for(e.from)) {
      open.insert(e);
    }
  }

  auto forward_reach = [&]() {
    std::vector<bool> reached(n + 1, false);
    reached[1] = true;
    for (const Edge& e : open) {  // ascending source order
      if (reached[e.from]) reached[e.to] = true;
    }
    return reached;
  };

  PrunedStage pruned;
  std::vector<bool> reached = forward_reach();
  if (!reached[n]) {
    // Retain the strongest incoming edge, preferring sources that are still
    // reachable; otherwise recurse through the chosen source.
    std::size_t target = n;
    while (!reached[target]) {
      const auto preds = graph.predecessors(target);
      if (preds.empty()) {
        throw std::invalid_argument("node " + std::to_string(target) + " has no incoming edge");
      }
      std::optional<std::size_t> best_reached, best_any;
      for (std::size_t i : preds) {
        const double w = snapshot.weight(i, target);
        if (!best_any || w > snapshot.weight(*best_any, target)) best_any = i;
        if (reached[i] && (!best_reached || w > snapshot.weight(*best_reached, target))) {
          best_reached = i;
        }
      }
      const std::size_t source = best_reached ? *best_reached : *best_any;
      open.insert(Edge{source, target});
      pruned.repaired.push_back(Edge{source, target});
      target = source;
    }
    reached = forward_reach();
  }

  std::vector<bool> reaches(n + 1, false);
  reaches[n] = true;
  for (auto it = open.rbegin(); it != open.rend(); ++it) {
    if (reaches[it->to]) reaches[it->from] = true;
  }

  pruned.live.assign(n + 1, false);
  for (std::size_t v = 1; v <= n; ++v) pruned.live[v] = reached[v] && reaches[v];
  pruned.weights = AdjacencySnapshot{n, std::vector<double>(n * n, 0.0)};
  for (const Edge& e : open) {
    if (pruned.live[e.from] && pruned.live[e.to]) {
      pruned.active_edges.push_back(e);
      pruned.weights.weight(e.from, e.to) = snapshot.weight(e.from, e.to);
    }
  }
  std::sort(pruned.repaired.begin(), pruned.repaired.end());
  return pruned;
}

template <typename T>
Tensor<T> batch_slice(const Tensor<T>& batch, std::size_t b) {
  Shape shape = batch.shape();
  const std::size_t per = batch.numel() / shape[0];
  shape[0] = 1;
  auto src = batch.data().subspan(b * per, per);
  return Tensor<T>(std::move(shape), std::vector<T>(src.begin(), src.end()));
}

template <typename T>
Tensor<T> batch_concat(std::span<const Tensor<T>> samples) {
  Shape shape = samples.front().shape();
  shape[0] = samples.size();
  std::vector<T> data;
  data.reserve(shape_numel(shape));
  for (const auto& s : samples) data.insert(data.end(), s.data().begin(), s.data().end());
  return Tensor<T>(std::move(shape), std::move(data));
}

namespace {

template <typename T>
Tensor<T> execute_pruned_sample(Tape<T>& tape, const Stage<T>& stage, const PrunedStage& plan,
                                const Tensor<T>& input) {
  const std::size_t n = stage.nodes.size();
  std::vector<Tensor<T>> outputs(n);
  outputs[0] = node_transform(tape, stage.node(1), input);
  for (std::size_t j = 2; j <= n; ++j) {
    if (!plan.node_live(j)) continue;
    Tensor<T> weights(Shape{1, j - 1});
    std::vector<Tensor<T>> inputs(j - 1);
    for (std::size_t i = 1; i < j; ++i) {
      if (!std::binary_search(plan.active_edges.begin(), plan.active_edges.end(), Edge{i, j})) {
        continue;
      }
      weights.mutable_data()[i - 1] = static_cast<T>(plan.weights.weight(i, j));
      inputs[i - 1] = outputs[i - 1];
    }
    auto aggregate = ops::weighted_sum<T>(tape, inputs, weights);
    outputs[j - 1] = node_transform(tape, stage.node(j), aggregate);
  }
  return outputs[n - 1];
}

template <typename T>
Tensor<T> execute_masked(Tape<T>& tape, const Stage<T>& stage,
                         const std::vector<PrunedStage>& plans, const Tensor<T>& first) {
  const std::size_t n = stage.nodes.size();
  const std::size_t batch = plans.size();
  std::vector<Tensor<T>> outputs(n);
  outputs[0] = first;
  for (std::size_t j = 2; j <= n; ++j) {
    Tensor<T> weights(Shape{batch, j - 1});
    auto w = weights.mutable_data();
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 1; i < j; ++i) {
        w[b * (j - 1) + (i - 1)] = static_cast<T>(plans[b].weights.weight(i, j));
      }
    }
    std::vector<Tensor<T>> inputs(outputs.begin(), outputs.begin() + (j - 1));
    auto aggregate = ops::weighted_sum<T>(tape, inputs, weights);
    outputs[j - 1] = node_transform(tape, stage.node(j), aggregate);
  }
  return outputs[n - 1];
}

}  // namespace

template <typename T>
PrunedResult<T> pruned_forward(const Network<T>& network, const Tensor<T>& batch,
                               const ThresholdPolicy& policy, PrunedExecution execution) {
  if (network.mode() != ConnectivityMode::dynamic) {
    throw std::invalid_argument("pruned inference requires a dynamic network");
  }
  policy.check();
  Tape<T> tape(false);
  PrunedResult<T> result;
  Tensor<T> x = batch;
  const std::size_t count = batch.dim(0);
  for (const Stage<T>& stage : network.stages()) {
    SoftStage<T> soft = dynamic_stage(tape, stage, x);
    std::vector<PrunedStage> plans;
    for (std::size_t b = 0; b < count; ++b) {
      plans.push_back(prune_for_inference(stage.graph, soft.buffer.snapshot(b), policy));
    }
    if (execution == PrunedExecution::masked) {
      x = execute_masked(tape, stage, plans, soft.outputs[0]);
    } else {
      std::vector<Tensor<T>> samples;
      for (std::size_t b = 0; b < count; ++b) {
        samples.push_back(execute_pruned_sample(tape, stage, plans[b], batch_slice(x, b)));
      }
      x = batch_concat<T>(samples);
    }
    result.plans.push_back(std::move(plans));
  }
  result.logits = network.head(tape, x);
  return result;
}

std::string CostReport::to_text() const {
  std::ostringstream out;
  char share[32];
  std::snprintf(share, sizeof share, "%.6f", router_share);
  out << "params: " << params << '\n'
      << "multiadds_total: " << multiadds_total << '\n'
      << "multiadds_router: " << multiadds_router << '\n'
      << "router_share: " << share << '\n';
  return out.str();
}

template <typename T>
CostReport count_cost(const Network<T>& network, const Shape& input_shape) {
  if (input_shape.size() != 3 || input_shape[0] != network.config().in_channels) {
    throw ShapeError("count_cost expects a [C,H,W] input with C = " +
                     std::to_string(network.config().in_channels));
  }
  CostReport report;
  std::size_t height = input_shape[1], width = input_shape[2];
  for (std::size_t s = 0; s < network.stages().size(); ++s) {
    const Stage<T>& stage = network.stages()[s];
    for (std::size_t j = 1; j <= stage.nodes.size(); ++j) {
      const NodeBlock<T>& block = stage.node(j);
      if (block.kernel.defined()) {
        const std::size_t k = block.kernel.dim(2);
        if (height + 2 * block.padding < k || width + 2 * block.padding < k) {
          throw ShapeError("count_cost: input too small for stage " + std::to_string(s));
        }
        const std::size_t oh = (height + 2 * block.padding - k) / block.stride + 1;
        const std::size_t ow = (width + 2 * block.padding - k) / block.stride + 1;
        LayerCost layer{"stage" + std::to_string(s) + ".node" + std::to_string(j),
                        block.kernel.dim(1), block.kernel.dim(0), oh, ow, k, 0};
        layer.multiadds = static_cast<std::uint64_t>(layer.in_channels) * layer.out_channels *
                          oh * ow * k * k;
        report.multiadds_total += layer.multiadds;
        report.layers.push_back(layer);
        height = oh;
        width = ow;
      }
      if (block.router) {
        const auto cost = router_multiadds(block.router->channels(), block.router->edges());
        report.multiadds_router += cost;
        report.multiadds_total += cost;
      }
    }
  }
  LayerCost fc{"head", network.head_weight().dim(0), network.head_weight().dim(1), 1, 1, 1, 0};
  fc.multiadds = static_cast<std::uint64_t>(fc.in_channels) * fc.out_channels;
  report.multiadds_total += fc.multiadds;
  report.layers.push_back(fc);
  for (const auto& p : network.parameters()) report.params += p.tensor.numel();
  report.router_share = report.multiadds_total == 0
                            ? 0.0
                            : static_cast<double>(report.multiadds_router) /
                                  static_cast<double>(report.multiadds_total);
  return report;
}

#define DGNET_INSTANTIATE_MODEL(T)                                                            \
  template class Network<T>;                                                                  \
  template Tensor<T> node_transform(Tape<T>&, const NodeBlock<T>&, const Tensor<T>&);         \
  template StaticWiring<T> uniform_wiring(const StageGraph&, T);                              \
  template std::vector<StaticWiring<T>> own_wiring(const Network<T>&);                        \
  template Tensor<T> static_forward(Tape<T>&, const Network<T>&, const Tensor<T>&,            \
                                    std::span<const StaticWiring<T>>);                        \
  template DynamicResult<T> dynamic_forward(Tape<T>&, const Network<T>&, const Tensor<T>&);   \
  template PrunedResult<T> pruned_forward(const Network<T>&, const Tensor<T>&,                \
                                          const ThresholdPolicy&, PrunedExecution);           \
  template CostReport count_cost(const Network<T>&, const Shape&);                            \
  template Tensor<T> batch_slice(const Tensor<T>&, std::size_t);                              \
  template Tensor<T> batch_concat(std::span<const Tensor<T>>);

DGNET_INSTANTIATE_MODEL(float)
DGNET_INSTANTIATE_MODEL(double)

#undef DGNET_INSTANTIATE_MODEL

}  // namespace dgnet
