// Copyright 2026 The DGNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "dgnet/routing.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "dgnet/ops.hpp"

namespace dgnet {

template <typename T>
Router<T>::Router(Tensor<T> weight, Tensor<T> bias)
    : weight_(std::move(weight)), bias_(std::move(bias)) {
  if (weight_.rank() != 2 || bias_.rank() != 1 || bias_.dim(0) != weight_.dim(1)) {
    throw ShapeError("router expects weight [C,E] and bias [E], got " +
                     shape_string(weight_.shape()) + " and " + shape_string(bias_.shape()));
  }
}

template <typename T>
Router<T>::Router(std::size_t channels, std::size_t edges, const RouterInit& init,
                  std::mt19937_64& rng)
    : weight_(Shape{channels, edges}, T(0), true),
      bias_(Shape{edges}, static_cast<T>(init.bias), true) {
  std::normal_distribution<double> normal(0.0, init.weight_std);
  for (T& w : weight_.mutable_data()) w = static_cast<T>(normal(rng));
}

template <typename T>
Router<T> Router<T>::split(std::size_t edge) const {
  if (edge >= edges()) throw std::out_of_range("router edge " + std::to_string(edge));
  std::vector<T> column(channels());
  for (std::size_t c = 0; c < channels(); ++c) column[c] = weight_.data()[c * edges() + edge];
  return Router(Tensor<T>(Shape{channels(), 1}, std::move(column)),
                Tensor<T>(Shape{1}, std::vector<T>{bias_.data()[edge]}));
}

template <typename T>
Tensor<T> route(Tape<T>& tape, const Router<T>& router, const Tensor<T>& features) {
  if (features.rank() != 4 || features.dim(1) != router.channels()) {
    throw ShapeError("route: features " + shape_string(features.shape()) +
                     " do not match router input channels " +
                     std::to_string(router.channels()));
  }
  auto pooled = ops::global_avg_pool(tape, features);
  auto logits = ops::fully_connected(tape, pooled, router.weight(), router.bias());
  return ops::sigmoid(tape, logits);
}

double ThresholdPolicy::tau_for(std::size_t node) const {
  if (node >= 1 && node - 1 < per_node.size()) return per_node[node - 1];
  return tau;
}

void ThresholdPolicy::check() const {
  auto ok = [](double t) { return t >= 0.0 && t < 1.0; };
  if (!ok(tau) || !std::all_of(per_node.begin(), per_node.end(), ok)) {
    throw std::invalid_argument("threshold tau must lie in [0,1)");
  }
}

template <typename T>
Tensor<T> apply_threshold(const Tensor<T>& weights, const ThresholdPolicy& policy,
                          std::size_t node) {
  Tensor<T> out = weights.detach();
  if (policy.mode == ThresholdMode::off) return out;
  const T tau = static_cast<T>(policy.tau_for(node));
  for (T& w : out.mutable_data()) {
    if (w < tau) w = T(0);
  }
  return out;
}

template <typename T>
double split_equivalence_check(const Router<T>& router, const Tensor<T>& features) {
  Tape<T> tape(false);
  const Tensor<T> joint = route(tape, router, features);
  const std::size_t batch = features.dim(0), edges = router.edges();
  double worst = 0.0;
  for (std::size_t e = 0; e < edges; ++e) {
    const Tensor<T> single = route(tape, router.split(e), features);
    for (std::size_t b = 0; b < batch; ++b) {
      const double diff = std::abs(static_cast<double>(joint.data()[b * edges + e]) -
                                   static_cast<double>(single.data()[b]));
      worst = std::max(worst, diff);
    }
  }
  return worst;
}

std::uint64_t router_multiadds(std::uint64_t in_channels, std::uint64_t out_edges) {
  if (in_channels == 0 || out_edges == 0) {
    throw std::invalid_argument("router_multiadds expects positive channel and edge counts");
  }
  return in_channels * out_edges;
}

template class Router<float>;
template class Router<double>;
template Tensor<float> route(Tape<float>&, const Router<float>&, const Tensor<float>&);
template Tensor<double> route(Tape<double>&, const Router<double>&, const Tensor<double>&);
template Tensor<float> apply_threshold(const Tensor<float>&, const ThresholdPolicy&, std::size_t);
template Tensor<double> apply_threshold(const Tensor<double>&, const ThresholdPolicy&,
                                        std::size_t);
template double split_equivalence_check(const Router<float>&, const Tensor<float>&);
template double split_equivalence_check(const Router<double>&, const Tensor<double>&);

}  // namespace dgnet
