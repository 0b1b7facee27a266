// Copyright 2026 The DGNet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Stage graphs: ordered DAGs whose node indices (1-based) are the
// topological order. Node 1 is the stage input, node N the stage output.

#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dgnet {

struct Edge {
  std::size_t from = 0;
  std::size_t to = 0;
  auto operator<=>(const Edge&) const = default;
};

class StageGraph {
 public:
  StageGraph() = default;
  /// Stores the edges sorted; performs no validation (see `validate`).
  StageGraph(std::size_t node_count, std::vector<Edge> edges);

  static StageGraph complete(std::size_t node_count);

  std::size_t node_count() const { return node_count_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t edge_count() const { return edges_.size(); }
  bool has_edge(std::size_t from, std::size_t to) const;

  /// Targets of node `i` in ascending order.
  std::vector<std::size_t> successors(std::size_t i) const;
  /// Sources of node `j` in ascending order.
  std::vector<std::size_t> predecessors(std::size_t j) const;

  void add_edge(std::size_t from, std::size_t to);

  bool operator==(const StageGraph&) const = default;

 private:
  std::size_t node_count_ = 0;
  std::vector<Edge> edges_;
};

enum class PatternKind { vgg, res, dense, complete, er, ba, ws };

std::string to_string(PatternKind kind);
PatternKind parse_pattern_kind(std::string_view name);
bool is_random(PatternKind kind);

struct WiringPattern {
  PatternKind kind = PatternKind::complete;
  double p = 0.2;       // er: edge probability; ws: rewiring probability
  std::size_t m = 5;    // ba: edges per attached node
  std::size_t k = 4;    // ws: ring-lattice degree (even)
  std::uint64_t seed = 0;
};

/// Builds the edge set of `pattern` over `node_count` nodes. Random kinds
/// draw an undirected graph, orient every edge from lower to higher index,
/// then wire source nodes from node 1 and sink nodes into node N.
StageGraph pattern_edges(const WiringPattern& pattern, std::size_t node_count);

struct ValidationReport {
  bool ok = true;
  std::string message;
  std::size_t from = 0;  // offending edge or node (0 when not applicable)
  std::size_t to = 0;

  explicit operator bool() const { return ok; }
};

/// Checks index ranges, topological order, duplicates, and that every node
/// lies on a path from node 1 to node N. Reports the first violation.
ValidationReport validate(const StageGraph& graph);

using EdgeWeights = std::map<Edge, double>;

/// DOT digraph; edge labels carry weights printed with three decimals.
/// Throws std::invalid_argument when a weight names a missing edge.
std::string export_dot(const StageGraph& graph, const std::optional<EdgeWeights>& weights = {},
                       std::string_view name = "stage");

struct ParsedEdge {
  Edge edge;
  std::optional<double> weight;
};

std::vector<ParsedEdge> parse_dot_edges(std::string_view dot);

/// "i,j,weight" lines under a header; edges without a weight print 1.
std::string export_edge_csv(const StageGraph& graph, const std::optional<EdgeWeights>& weights = {});
std::vector<ParsedEdge> parse_edge_csv(std::string_view csv);

}  // namespace dgnet
