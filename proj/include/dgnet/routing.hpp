// Copyright 2026 The DGNet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Per-node routers: squeeze (global average pool), an affine map over the
// channel descriptor, and a sigmoid that yields one weight per output edge.

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "dgnet/tensor.hpp"

namespace dgnet {

struct RouterInit {
  double weight_std = 0.01;
  double bias = 0.0;  // sigmoid(bias) is the initial edge weight
};

template <typename T>
class Router {
 public:
  Router() = default;
  Router(Tensor<T> weight, Tensor<T> bias);
  Router(std::size_t channels, std::size_t edges, const RouterInit& init, std::mt19937_64& rng);

  std::size_t channels() const { return weight_.dim(0); }
  std::size_t edges() const { return weight_.dim(1); }

  const Tensor<T>& weight() const { return weight_; }
  const Tensor<T>& bias() const { return bias_; }
  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

  /// The single-edge router that owns column `edge` of this router.
  Router split(std::size_t edge) const;

 private:
  Tensor<T> weight_;  // [C, edges]
  Tensor<T> bias_;    // [edges]
};

/// [B,C,H,W] features -> [B,edges] weights in (0,1), differentiable into the
/// router parameters and the features.
template <typename T>
Tensor<T> route(Tape<T>& tape, const Router<T>& router, const Tensor<T>& features);

enum class ThresholdMode { off, fixed };

struct ThresholdPolicy {
  ThresholdMode mode = ThresholdMode::off;
  double tau = 0.05;
  std::vector<double> per_node;  // optional override, indexed by node - 1

  double tau_for(std::size_t node) const;
  void check() const;
};

/// Zeroes every weight below the node's threshold; kept weights pass through
/// unchanged. Identity when the policy is off. Not differentiable.
template <typename T>
Tensor<T> apply_threshold(const Tensor<T>& weights, const ThresholdPolicy& policy,
                          std::size_t node = 1);

/// Evaluates the joint router and its per-edge split on the same features and
/// returns the largest absolute difference between the two outputs.
template <typename T>
double split_equivalence_check(const Router<T>& router, const Tensor<T>& features);

std::uint64_t router_multiadds(std::uint64_t in_channels, std::uint64_t out_edges);

extern template class Router<float>;
extern template class Router<double>;

}  // namespace dgnet
