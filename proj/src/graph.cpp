// Copyright 2026 The DGNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "dgnet/graph.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <stdexcept>

namespace dgnet {

StageGraph::StageGraph(std::size_t node_count, std::vector<Edge> edges)
    : node_count_(node_count), edges_(std::move(edges)) {
  std::sort(edges_.begin(), edges_.end());
}

StageGraph StageGraph::complete(std::size_t node_count) {
  std::vector<Edge> edges;
  for (std::size_t i = 1; i <= node_count; ++i) {
    for (std::size_t j = i + 1; j <= node_count; ++j) edges.push_back({i, j});
  }
  return StageGraph(node_count, std::move(edges));
}

bool StageGraph::has_edge(std::size_t from, std::size_t to) const {
  return std::binary_search(edges_.begin(), edges_.end(), Edge{from, to});
}

std::vector<std::size_t> StageGraph::successors(std::size_t i) const {
  std::vector<std::size_t> out;
  for (const Edge& e : edges_) {
    if (e.from == i) out.push_back(e.to);
  }
  return out;
}

std::vector<std::size_t> StageGraph::predecessors(std::size_t j) const {
  std::vector<std::size_t> out;
  for (const Edge& e : edges_) {
    if (e.to == j) out.push_back(e.from);
  }
  std::sort(out.begin(), out.end());
  return out;
}

void StageGraph::add_edge(std::size_t from, std::size_t to) {
  edges_.insert(std::upper_bound(edges_.begin(), edges_.end(), Edge{from, to}), Edge{from, to});
}

std::string to_string(PatternKind kind) {
  switch (kind) {
    case PatternKind::vgg: return "vgg";
    case PatternKind::res: return "res";
    case PatternKind::dense: return "dense";
    case PatternKind::complete: return "complete";
    case PatternKind::er: return "er";
    case PatternKind::ba: return "ba";
    case PatternKind::ws: return "ws";
  }
  return "?";
}

PatternKind parse_pattern_kind(std::string_view name) {
  for (PatternKind kind : {PatternKind::vgg, PatternKind::res, PatternKind::dense,
                           PatternKind::complete, PatternKind::er, PatternKind::ba,
                           PatternKind::ws}) {
    if (to_string(kind) == name) return kind;
  }
  throw std::invalid_argument("unknown wiring pattern '" + std::string(name) + "'");
}

bool is_random(PatternKind kind) {
  return kind == PatternKind::er || kind == PatternKind::ba || kind == PatternKind::ws;
}

namespace {

// Undirected edges over 0-based node ids, stored as (min, max).
using UndirectedEdges = std::set<std::pair<std::size_t, std::size_t>>;

std::pair<std::size_t, std::size_t> unordered(std::size_t a, std::size_t b) {
  return {std::min(a, b), std::max(a, b)};
}

UndirectedEdges erdos_renyi(std::size_t n, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution keep(p);
  UndirectedEdges edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (keep(rng)) edges.insert({i, j});
    }
  }
  return edges;
}

// Preferential attachment grown from a complete seed on the first m nodes.
UndirectedEdges barabasi_albert(std::size_t n, std::size_t m, std::mt19937_64& rng) {
  UndirectedEdges edges;
  std::vector<std::size_t> endpoints;  // each node repeated once per incident edge
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      edges.insert({i, j});
      endpoints.push_back(i);
      endpoints.push_back(j);
    }
  }
  for (std::size_t v = m; v < n; ++v) {
    std::set<std::size_t> targets;
    while (targets.size() < m) {
      if (endpoints.empty()) {
        targets.insert(std::uniform_int_distribution<std::size_t>(0, v - 1)(rng));
      } else {
        std::uniform_int_distribution<std::size_t> pick(0, endpoints.size() - 1);
        targets.insert(endpoints[pick(rng)]);
      }
    }
    for (std::size_t t : targets) {
      edges.insert(unordered(t, v));
      endpoints.push_back(t);
      endpoints.push_back(v);
    }
  }
  return edges;
}

// Ring lattice of degree k, each clockwise edge rewired with probability p.
UndirectedEdges watts_strogatz(std::size_t n, std::size_t k, double p, std::mt19937_64& rng) {
  UndirectedEdges edges;
  for (std::size_t s = 1; s <= k / 2; ++s) {
    for (std::size_t u = 0; u < n; ++u) edges.insert(unordered(u, (u + s) % n));
  }
  auto degree = [&edges](std::size_t u) {
    return static_cast<std::size_t>(std::count_if(edges.begin(), edges.end(), [u](const auto& e) {
      return e.first == u || e.second == u;
    }));
  };
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (std::size_t s = 1; s <= k / 2; ++s) {
    for (std::size_t u = 0; u < n; ++u) {
      const std::size_t v = (u + s) % n;
      if (unit(rng) >= p) continue;
      if (degree(u) >= n - 1) continue;
      std::size_t w = pick(rng);
      while (w == u || edges.count(unordered(u, w))) w = pick(rng);
      edges.erase(unordered(u, v));
      edges.insert(unordered(u, w));
    }
  }
  return edges;
}

StageGraph orient_and_repair(std::size_t n, const UndirectedEdges& undirected) {
  std::vector<Edge> edges;
  for (const auto& [a, b] : undirected) edges.push_back({a + 1, b + 1});
  StageGraph graph(n, std::move(edges));
  for (std::size_t j = 2; j <= n; ++j) {
    if (graph.predecessors(j).empty()) graph.add_edge(1, j);
  }
  for (std::size_t i = 1; i < n; ++i) {
    if (graph.successors(i).empty()) graph.add_edge(i, n);
  }
  return graph;
}

void check_probability(const char* what, double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument(std::string(what) + " probability must lie in [0,1]");
  }
}

}  // namespace

StageGraph pattern_edges(const WiringPattern& pattern, std::size_t node_count) {
  if (node_count < 2) throw std::invalid_argument("a stage graph needs at least 2 nodes");
  const std::size_t n = node_count;
  std::vector<Edge> edges;
  std::mt19937_64 rng(pattern.seed);
  switch (pattern.kind) {
    case PatternKind::vgg:
      for (std::size_t i = 1; i < n; ++i) edges.push_back({i, i + 1});
      return StageGraph(n, std::move(edges));
    case PatternKind::res:
      for (std::size_t i = 1; i < n; ++i) {
        for (std::size_t j : {i + 1, i + 2}) {
          if (j <= n) edges.push_back({i, j});
        }
      }
      return StageGraph(n, std::move(edges));
    case PatternKind::dense:
    case PatternKind::complete:
      return StageGraph::complete(n);
    case PatternKind::er:
      check_probability("er edge", pattern.p);
      return orient_and_repair(n, erdos_renyi(n, pattern.p, rng));
    case PatternKind::ba:
      if (pattern.m < 1 || pattern.m >= n) {
        throw std::invalid_argument("ba requires 1 <= m < N (m=" + std::to_string(pattern.m) +
                                    ", N=" + std::to_string(n) + ")");
      }
      return orient_and_repair(n, barabasi_albert(n, pattern.m, rng));
    case PatternKind::ws:
      check_probability("ws rewiring", pattern.p);
      if (pattern.k % 2 != 0 || pattern.k < 2 || pattern.k >= n) {
        throw std::invalid_argument("ws requires an even k with 2 <= k < N (k=" +
                                    std::to_string(pattern.k) + ", N=" + std::to_string(n) + ")");
      }
      return orient_and_repair(n, watts_strogatz(n, pattern.k, pattern.p, rng));
  }
  throw std::invalid_argument("unhandled wiring pattern");
}

ValidationReport validate(const StageGraph& graph) {
  const std::size_t n = graph.node_count();
  if (n < 2) return {false, "graph needs at least 2 nodes", 0, 0};
  for (std::size_t k = 0; k < graph.edges().size(); ++k) {
    const Edge& e = graph.edges()[k];
    if (e.from < 1 || e.to < 1 || e.from > n || e.to > n) {
      return {false, "node index out of range", e.from, e.to};
    }
    if (e.from >= e.to) return {false, "edge against topological order", e.from, e.to};
    if (k > 0 && graph.edges()[k - 1] == e) return {false, "duplicate edge", e.from, e.to};
  }

  std::vector<bool> reached(n + 1, false), reaches(n + 1, false);
  reached[1] = true;
  for (const Edge& e : graph.edges()) {  // sorted by source, so one sweep suffices
    if (reached[e.from]) reached[e.to] = true;
  }
  reaches[n] = true;
  for (auto it = graph.edges().rbegin(); it != graph.edges().rend(); ++it) {
    if (reaches[it->to]) reaches[it->from] = true;
  }
  for (std::size_t v = 2; v <= n; ++v) {
    if (!reached[v]) return {false, "node unreachable", v, 0};
  }
  for (std::size_t v = 1; v < n; ++v) {
    if (!reaches[v]) return {false, "node cannot reach output", v, 0};
  }
  return {};
}

namespace {

std::string format_weight(double w) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", w);
  return buf;
}

void check_weights(const StageGraph& graph, const std::optional<EdgeWeights>& weights) {
  if (!weights) return;
  for (const auto& [edge, w] : *weights) {
    if (!graph.has_edge(edge.from, edge.to)) {
      throw std::invalid_argument("weight given for non-existent edge (" +
                                  std::to_string(edge.from) + "," + std::to_string(edge.to) +
                                  ")");
    }
  }
}

}  // namespace

std::string export_dot(const StageGraph& graph, const std::optional<EdgeWeights>& weights,
                       std::string_view name) {
  check_weights(graph, weights);
  std::ostringstream out;
  out << "digraph " << name << " {\n  rankdir=LR;\n";
  for (std::size_t v = 1; v <= graph.node_count(); ++v) {
    out << "  n" << v << " [label=\"" << v;
    if (v == 1) out << " (in)";
    if (v == graph.node_count()) out << " (out)";
    out << "\"];\n";
  }
  for (const Edge& e : graph.edges()) {
    out << "  n" << e.from << " -> n" << e.to;
    if (weights) {
      auto it = weights->find(e);
      if (it != weights->end()) out << " [label=\"" << format_weight(it->second) << "\"]";
    }
    out << ";\n";
  }
  out << "}\n";
  return out.str();
}

std::vector<ParsedEdge> parse_dot_edges(std::string_view dot) {
  static const std::regex edge_re(R"re(n(\d+)\s*->\s*n(\d+)(\s*\[label="([^"]*)"\])?)re");
  std::vector<ParsedEdge> out;
  const std::string text(dot);
  for (auto it = std::sregex_iterator(text.begin(), text.end(), edge_re);
       it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    ParsedEdge parsed{{std::stoul(m[1].str()), std::stoul(m[2].str())}, std::nullopt};
    if (m[4].matched) parsed.weight = std::stod(m[4].str());
    out.push_back(parsed);
  }
  return out;
}

std::string export_edge_csv(const StageGraph& graph, const std::optional<EdgeWeights>& weights) {
  check_weights(graph, weights);
  std::ostringstream out;
  out << "i,j,weight\n";
  for (const Edge& e : graph.edges()) {
    double w = 1.0;
    if (weights) {
      auto it = weights->find(e);
      if (it != weights->end()) w = it->second;
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", w);
    out << e.from << ',' << e.to << ',' << buf << '\n';
  }
  return out.str();
}

std::vector<ParsedEdge> parse_edge_csv(std::string_view csv) {
  std::vector<ParsedEdge> out;
  std::istringstream in{std::string(csv)};
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line.rfind("i,j", 0) == 0) continue;
    }
    std::size_t i = 0, j = 0;
    double w = 0;
    if (std::sscanf(line.c_str(), "%zu,%zu,%lf", &i, &j, &w) != 3) {
      throw std::invalid_argument("malformed edge line '" + line + "'");
    }
    out.push_back({{i, j}, w});
  }
  return out;
}

}  // namespace dgnet
