// Copyright 2026 The DGNet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Networks built from stage graphs. Each node aggregates the weighted sum of
// its predecessors' outputs (ascending source order), transforms it, and in
// dynamic mode routes the result to produce per-sample weights on its
// outgoing edges.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dgnet/buffer.hpp"
#include "dgnet/graph.hpp"
#include "dgnet/routing.hpp"
#include "dgnet/tensor.hpp"

namespace dgnet {

/// How edge weights are produced.
///  - baseline: every edge of the stage graph has fixed weight 1.
///  - static_alpha: one learnable scalar per edge, shared by all samples.
///  - dynamic: per-sample weights from the node routers.
enum class ConnectivityMode { baseline, static_alpha, dynamic };

std::string to_string(ConnectivityMode mode);
ConnectivityMode parse_connectivity_mode(std::string_view name);

struct StageSpec {
  std::size_t nodes = 6;  // including the input and output nodes
  std::size_t channels = 16;
  std::size_t stride = 2;  // applied by the stage input node
};

struct ModelConfig {
  std::size_t in_channels = 3;
  std::size_t classes = 10;
  std::size_t kernel = 3;
  std::vector<StageSpec> stages{{6, 16, 1}, {6, 32, 2}, {6, 64, 2}};
  WiringPattern pattern;  // random kinds use pattern.seed + stage index
  ConnectivityMode mode = ConnectivityMode::dynamic;
  RouterInit router_init;
  double alpha_init = 0.5;
  /// Group normalization between convolution and relu with this many
  /// groups per node; 0 leaves nodes unnormalized.
  std::size_t norm_groups = 0;

  void check() const;
};

enum class NodeRole { input, interior, output };

template <typename T>
struct NodeBlock {
  NodeRole role = NodeRole::interior;
  Tensor<T> kernel;  // [C_out, C_in, k, k]; undefined for the output node
  Tensor<T> bias;    // [C_out]
  Tensor<T> norm_scale;  // [C_out]; defined only with group normalization
  Tensor<T> norm_shift;  // [C_out]
  std::size_t norm_groups = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::vector<std::size_t> targets;  // successors in the stage graph
  std::optional<Router<T>> router;   // dynamic mode, nodes with outgoing edges
};

template <typename T>
struct Stage {
  StageGraph graph;
  std::size_t channels = 0;
  std::vector<NodeBlock<T>> nodes;  // nodes[j - 1] is node j
  std::map<Edge, Tensor<T>> alpha;  // static_alpha mode, each [1,1]

  const NodeBlock<T>& node(std::size_t j) const { return nodes.at(j - 1); }
  NodeBlock<T>& node(std::size_t j) { return nodes.at(j - 1); }
};

enum class ParamGroup { network, router, alpha };

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
  ParamGroup group = ParamGroup::network;
  bool decay = true;
};

template <typename T>
class Network {
 public:
  Network(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ConnectivityMode mode() const { return config_.mode; }
  const std::vector<Stage<T>>& stages() const { return stages_; }
  std::vector<Stage<T>>& stages() { return stages_; }
  const Tensor<T>& head_weight() const { return head_weight_; }
  const Tensor<T>& head_bias() const { return head_bias_; }

  /// Every learnable tensor, in a fixed order. Weight decay applies to all
  /// but router biases and static edge scalars.
  std::vector<Parameter<T>> parameters() const;

  /// Forward pass in the network's own connectivity mode.
  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& batch) const;

  /// Classifier head: global average pool followed by a fully connected layer.
  Tensor<T> head(Tape<T>& tape, const Tensor<T>& features) const;

 private:
  ModelConfig config_;
  std::vector<Stage<T>> stages_;
  Tensor<T> head_weight_;
  Tensor<T> head_bias_;
};

/// f^(j): conv + bias (+ group norm) + relu for input and interior nodes,
/// identity for the output node.
template <typename T>
Tensor<T> node_transform(Tape<T>& tape, const NodeBlock<T>& block, const Tensor<T>& aggregate);

/// Shared per-edge weights for one stage. Each weight is a [1,1] tensor.
template <typename T>
struct StaticWiring {
  StageGraph graph;
  std::map<Edge, Tensor<T>> weights;
};

template <typename T>
StaticWiring<T> uniform_wiring(const StageGraph& graph, T value);

/// Wiring of the network's own graphs in baseline or static_alpha mode.
template <typename T>
std::vector<StaticWiring<T>> own_wiring(const Network<T>& network);

/// x_j = f_j(sum_{i<j} w_ij x_i) with the same weights for every sample.
/// Throws std::invalid_argument when an edge of a wiring graph has no weight.
template <typename T>
Tensor<T> static_forward(Tape<T>& tape, const Network<T>& network, const Tensor<T>& batch,
                         std::span<const StaticWiring<T>> wiring);

template <typename T>
struct DynamicResult {
  Tensor<T> logits;
  std::vector<AdjacencyBuffer<T>> buffers;  // one per stage
};

/// Per stage: allocate the buffer, then for each node in topological order
/// read its row, aggregate, transform, route, and write its column.
template <typename T>
DynamicResult<T> dynamic_forward(Tape<T>& tape, const Network<T>& network, const Tensor<T>& batch);

/// Active sub-graph of one sample in one stage after thresholding.
struct PrunedStage {
  std::vector<bool> live;          // indexed by node, entry 0 unused
  AdjacencySnapshot weights;       // active edges keep their weight, all else 0
  std::vector<Edge> active_edges;  // sorted
  std::vector<Edge> repaired;      // edges retained below threshold
  bool node_live(std::size_t j) const { return live.at(j); }
};

/// Closes edges below the source node's threshold, removes nodes that lose
/// every input or every output (cascading), and if the output node becomes
/// unreachable retains its maximum-weight incoming edge (recursively through
/// unreachable sources).
PrunedStage prune_for_inference(const StageGraph& graph, const AdjacencySnapshot& snapshot,
                                const ThresholdPolicy& policy);

enum class PrunedExecution {
  skip,   // dead nodes are not computed
  masked  // every node is computed, inactive edges carry weight 0
};

template <typename T>
struct PrunedResult {
  Tensor<T> logits;
  std::vector<std::vector<PrunedStage>> plans;  // [stage][sample]
};

/// Thresholded inference for dynamic networks. Each stage first runs a soft
/// pass on its input to obtain router weights, prunes every sample's graph,
/// then executes the pruned graph.
template <typename T>
PrunedResult<T> pruned_forward(const Network<T>& network, const Tensor<T>& batch,
                               const ThresholdPolicy& policy, PrunedExecution execution);

struct LayerCost {
  std::string name;
  std::size_t in_channels = 0, out_channels = 0;
  std::size_t out_height = 0, out_width = 0;
  std::size_t kernel = 0;
  std::uint64_t multiadds = 0;
};

struct CostReport {
  std::uint64_t params = 0;
  std::uint64_t multiadds_total = 0;
  std::uint64_t multiadds_router = 0;
  double router_share = 0.0;
  std::vector<LayerCost> layers;  // convolutions and the classifier

  std::string to_text() const;
};

/// Per-sample cost for an input of the given [C,H,W] shape.
template <typename T>
CostReport count_cost(const Network<T>& network, const Shape& input_shape);

/// Sample `b` of a batched tensor as a batch of one.
template <typename T>
Tensor<T> batch_slice(const Tensor<T>& batch, std::size_t b);

template <typename T>
Tensor<T> batch_concat(std::span<const Tensor<T>> samples);

extern template class Network<float>;
extern template class Network<double>;

}  // namespace dgnet
