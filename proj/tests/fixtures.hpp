// Copyright 2026 The DGNet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Small networks and helpers shared by the model tests and the acceptance
// suite.

#pragma once

#include <random>
#include <set>
#include <vector>

#include "dgnet/model.hpp"
#include "dgnet/ops.hpp"
#include "oracles.hpp"

namespace fixture {

using namespace dgnet;

template <typename T>
Tensor<T> randn(Shape shape, std::mt19937_64& rng, double scale = 1.0, bool grad = false) {
  Tensor<T> t(std::move(shape), T(0), grad);
  std::normal_distribution<double> n(0.0, scale);
  for (T& v : t.mutable_data()) v = static_cast<T>(n(rng));
  return t;
}

inline ModelConfig single_stage(std::size_t nodes, std::size_t channels, std::size_t in_channels,
                                std::size_t classes = 3, ConnectivityMode mode = ConnectivityMode::dynamic,
                                PatternKind kind = PatternKind::complete) {
  ModelConfig c;
  c.in_channels = in_channels;
  c.classes = classes;
  c.stages = {{nodes, channels, 1}};
  c.pattern.kind = kind;
  c.mode = mode;
  return c;
}

// Redraws every bias and router parameter so nothing sits at its tidy
// initial value; router weights get a spread large enough to make edge
// weights differ visibly between samples.
template <typename T>
void perturb(Network<T>& net, std::mt19937_64& rng, double router_std = 1.0) {
  std::normal_distribution<double> small(0.0, 0.1), wide(0.0, router_std);
  for (auto& stage : net.stages()) {
    for (auto& block : stage.nodes) {
      if (block.bias.defined()) {
        for (T& v : block.bias.mutable_data()) v = static_cast<T>(small(rng));
      }
      if (block.router) {
        for (T& v : block.router->weight().mutable_data()) v = static_cast<T>(wide(rng));
        for (T& v : block.router->bias().mutable_data()) v = static_cast<T>(small(rng));
      }
    }
  }
}

// Routers that emit (numerically) 1 on edges of keep[stage] and 0 elsewhere.
template <typename T>
void force_routers(Network<T>& net, const std::vector<StaticWiring<T>>& keep,
                   double magnitude = 60.0) {
  for (std::size_t s = 0; s < net.stages().size(); ++s) {
    auto& stage = net.stages()[s];
    for (std::size_t j = 1; j <= stage.nodes.size(); ++j) {
      auto& block = stage.node(j);
      if (!block.router) continue;
      for (T& v : block.router->weight().mutable_data()) v = T(0);
      auto b = block.router->bias().mutable_data();
      for (std::size_t k = 0; k < block.targets.size(); ++k) {
        b[k] = static_cast<T>(keep[s].graph.has_edge(j, block.targets[k]) ? magnitude : -magnitude);
      }
    }
  }
}

// Weight-1 wiring of `kind` for every stage of `net`.
template <typename T>
std::vector<StaticWiring<T>> pattern_wiring(const Network<T>& net, PatternKind kind) {
  std::vector<StaticWiring<T>> wiring;
  for (const auto& s : net.stages()) {
    wiring.push_back(uniform_wiring<T>(pattern_edges(WiringPattern{kind}, s.graph.node_count()), T(1)));
  }
  return wiring;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i])));
  }
  return worst;
}

// Largest deviation between dynamic_forward and the per-sample recursive
// evaluator on one network and batch.
template <typename T>
double recursive_deviation(const Network<T>& net, const Tensor<T>& batch) {
  Tape<T> tape(false);
  const auto logits = dynamic_forward(tape, net, batch).logits;
  oracle::RecursiveEvaluator<T> eval(net, oracle::router_weights(net));
  double worst = 0.0;
  const std::size_t k = logits.dim(1);
  for (std::size_t b = 0; b < batch.dim(0); ++b) {
    const auto ref = eval.logits(oracle::sample_image(batch, b));
    for (std::size_t c = 0; c < k; ++c) {
      worst = std::max(worst, std::abs(ref[c] - static_cast<double>(logits.data()[b * k + c])));
    }
  }
  return worst;
}

// Cross-entropy gradient check over every entry of every parameter.
inline double model_gradcheck(Network<double>& net, const Tensor<double>& batch,
                              const std::vector<int>& labels, std::size_t* checked = nullptr) {
  auto params = net.parameters();
  std::vector<Tensor<double>> tensors;
  for (auto& p : params) {
    p.tensor.clear_grad();
    tensors.push_back(p.tensor);
  }
  Tape<double> tape;
  auto loss = ops::cross_entropy_smoothed(tape, net.forward(tape, batch), labels, 0.1);
  tape.backward(loss);
  auto eval = [&] {
    Tape<double> quiet(false);
    return ops::cross_entropy_smoothed(quiet, net.forward(quiet, batch), labels, 0.1).item();
  };
  std::mt19937_64 rng(0);
  return oracle::gradcheck(tensors, eval, static_cast<std::size_t>(-1), 1e-5, rng, 1e-6, checked);
}

}  // namespace fixture
