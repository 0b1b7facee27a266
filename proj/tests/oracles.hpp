// Copyright 2026 The DGNet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reference implementations used by the tests. None of these touch the ops
// library: they read parameters out of the model and recompute everything
// with plain loops in double precision.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "dgnet/model.hpp"

namespace oracle {

using dgnet::Edge;
using dgnet::Shape;
using dgnet::Tensor;

// Dense [C,H,W] image of one sample.
struct Image {
  std::size_t c = 0, h = 0, w = 0;
  std::vector<double> v;
  double& at(std::size_t ch, std::size_t y, std::size_t x) { return v[(ch * h + y) * w + x]; }
  double at(std::size_t ch, std::size_t y, std::size_t x) const { return v[(ch * h + y) * w + x]; }
};

template <typename T>
Image sample_image(const Tensor<T>& batch, std::size_t b) {
  Image img{batch.dim(1), batch.dim(2), batch.dim(3), {}};
  const std::size_t per = img.c * img.h * img.w;
  auto d = batch.data();
  img.v.assign(d.begin() + b * per, d.begin() + (b + 1) * per);
  return img;
}

// Six nested loops over (out channel, y, x, in channel, ky, kx).
template <typename T>
Image conv(const Image& in, const Tensor<T>& kernel, std::size_t stride, std::size_t pad) {
  const std::size_t co = kernel.dim(0), ci = kernel.dim(1), k = kernel.dim(2);
  Image out{co, (in.h + 2 * pad - k) / stride + 1, (in.w + 2 * pad - k) / stride + 1, {}};
  out.v.assign(out.c * out.h * out.w, 0.0);
  auto kd = kernel.data();
  for (std::size_t o = 0; o < co; ++o) {
    for (std::size_t y = 0; y < out.h; ++y) {
      for (std::size_t x = 0; x < out.w; ++x) {
        double acc = 0.0;
        for (std::size_t c = 0; c < ci; ++c) {
          for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long iy = static_cast<long>(y * stride + ky) - static_cast<long>(pad);
              const long ix = static_cast<long>(x * stride + kx) - static_cast<long>(pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(in.h) ||
                  ix >= static_cast<long>(in.w)) {
                continue;
              }
              acc += in.at(c, iy, ix) * kd[((o * ci + c) * k + ky) * k + kx];
            }
          }
        }
        out.at(o, y, x) = acc;
      }
    }
  }
  return out;
}

inline std::vector<double> gap(const Image& img) {
  std::vector<double> out(img.c, 0.0);
  for (std::size_t c = 0; c < img.c; ++c) {
    for (std::size_t i = 0; i < img.h * img.w; ++i) out[c] += img.v[c * img.h * img.w + i];
    out[c] /= static_cast<double>(img.h * img.w);
  }
  return out;
}

// Two-pass mean and variance per contiguous channel group.
template <typename T>
Image group_norm(const Image& in, std::size_t groups, const Tensor<T>& scale, const Tensor<T>& shift,
                 double eps = 1e-5) {
  Image out = in;
  const std::size_t per = in.c / groups, plane = in.h * in.w;
  for (std::size_t g = 0; g < groups; ++g) {
    double mean = 0.0, var = 0.0;
    for (std::size_t c = g * per; c < (g + 1) * per; ++c) {
      for (std::size_t i = 0; i < plane; ++i) mean += in.v[c * plane + i];
    }
    mean /= static_cast<double>(per * plane);
    for (std::size_t c = g * per; c < (g + 1) * per; ++c) {
      for (std::size_t i = 0; i < plane; ++i) var += std::pow(in.v[c * plane + i] - mean, 2);
    }
    var /= static_cast<double>(per * plane);
    for (std::size_t c = g * per; c < (g + 1) * per; ++c) {
      for (std::size_t i = 0; i < plane; ++i) {
        const double n = (in.v[c * plane + i] - mean) / std::sqrt(var + eps);
        out.v[c * plane + i] = static_cast<double>(scale.data()[c]) * n + static_cast<double>(shift.data()[c]);
      }
    }
  }
  return out;
}

// x·W + b with W stored [in, out].
template <typename T>
std::vector<double> fc(const std::vector<double>& x, const Tensor<T>& w, const Tensor<T>& b) {
  const std::size_t n_in = w.dim(0), n_out = w.dim(1);
  std::vector<double> out(n_out);
  for (std::size_t o = 0; o < n_out; ++o) {
    double acc = b.data()[o];
    for (std::size_t i = 0; i < n_in; ++i) acc += x[i] * w.data()[i * n_out + o];
    out[o] = acc;
  }
  return out;
}

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Edge weight source for the recursive evaluator: returns the weight of
// edge from->to in stage s given the source node's output.
using WeightFn = std::function<double(std::size_t stage, std::size_t from, std::size_t to,
                                      const Image& source_output)>;

// Evaluates one sample through the network by recursion on node outputs:
// x_j = f_j(sum_i w_ij x_i), memoized per stage.
template <typename T>
class RecursiveEvaluator {
 public:
  RecursiveEvaluator(const dgnet::Network<T>& net, WeightFn weight)
      : net_(net), weight_(std::move(weight)) {}

  std::vector<double> logits(const Image& input) {
    Image x = input;
    for (std::size_t s = 0; s < net_.stages().size(); ++s) {
      memo_.clear();
      stage_ = s;
      stage_input_ = x;
      x = node_output(net_.stages()[s].graph.node_count());
    }
    return fc(gap(x), net_.head_weight(), net_.head_bias());
  }

  // Weight of edge (from,to) in `stage` for the last evaluated sample.
  std::map<std::pair<std::size_t, Edge>, double> weights;

 private:
  Image transform(std::size_t j, const Image& agg) {
    const auto& block = net_.stages()[stage_].node(j);
    if (block.role == dgnet::NodeRole::output) return agg;
    Image out = conv(agg, block.kernel, block.stride, block.padding);
    const std::size_t plane = out.h * out.w;
    for (std::size_t c = 0; c < out.c; ++c) {
      for (std::size_t i = 0; i < plane; ++i) out.v[c * plane + i] += static_cast<double>(block.bias.data()[c]);
    }
    if (block.norm_groups != 0) out = group_norm(out, block.norm_groups, block.norm_scale, block.norm_shift);
    for (double& v : out.v) v = std::max(v, 0.0);
    return out;
  }

  const Image& node_output(std::size_t j) {
    if (auto it = memo_.find(j); it != memo_.end()) return it->second;
    Image agg;
    if (j == 1) {
      agg = stage_input_;
    } else {
      const auto& graph = net_.stages()[stage_].graph;
      for (std::size_t i = 1; i < j; ++i) {
        if (!graph.has_edge(i, j)) continue;
        const Image& xi = node_output(i);
        const double w = weight_(stage_, i, j, xi);
        weights[{stage_, Edge{i, j}}] = w;
        if (agg.v.empty()) {
          agg = xi;
          agg.v.assign(xi.v.size(), 0.0);
        }
        for (std::size_t k = 0; k < xi.v.size(); ++k) agg.v[k] += w * xi.v[k];
      }
    }
    return memo_[j] = transform(j, agg);
  }

  const dgnet::Network<T>& net_;
  WeightFn weight_;
  std::size_t stage_ = 0;
  Image stage_input_;
  std::map<std::size_t, Image> memo_;
};

// Router weights recomputed from parameters: sigmoid(W^T gap(x) + b).
template <typename T>
WeightFn router_weights(const dgnet::Network<T>& net) {
  return [&net](std::size_t s, std::size_t from, std::size_t to, const Image& xi) {
    const auto& block = net.stages()[s].node(from);
    const auto pos = std::find(block.targets.begin(), block.targets.end(), to) -
                     block.targets.begin();
    const auto z = fc(gap(xi), block.router->weight(), block.router->bias());
    return logistic(z[static_cast<std::size_t>(pos)]);
  };
}

// Central finite-difference check of d loss / d param over `probes` random
// entries per parameter tensor (every entry when the tensor is smaller).
// Returns the largest relative error |a-n| / max(|a|,|n|,floor).
template <typename T>
double gradcheck(std::vector<Tensor<T>> params, const std::function<double()>& loss,
                 std::size_t probes, double eps, std::mt19937_64& rng, double floor = 1e-6,
                 std::size_t* checked = nullptr) {
  double worst = 0.0;
  for (auto& p : params) {
    const std::vector<T> analytic(p.grad().begin(), p.grad().end());
    std::vector<std::size_t> idx(p.numel());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (idx.size() > probes) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(probes);
    }
    for (std::size_t i : idx) {
      auto data = p.mutable_data();
      const T saved = data[i];
      data[i] = saved + static_cast<T>(eps);
      const double up = loss();
      data[i] = saved - static_cast<T>(eps);
      const double down = loss();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = static_cast<double>(analytic[i]);
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      worst = std::max(worst, rel);
      if (checked) ++*checked;
    }
  }
  return worst;
}

// Edges kept by thresholding at tau, then nodes without kept inputs (other
// than node 1) or kept outputs (other than node N) are removed repeatedly
// until nothing changes. Returns the surviving edges.
inline std::set<Edge> cascade_prune(const dgnet::StageGraph& graph,
                                    const dgnet::AdjacencySnapshot& snap, double tau) {
  std::set<Edge> kept;
  for (const Edge& e : graph.edges()) {
    if (snap.weight(e.from, e.to) >= tau) kept.insert(e);
  }
  const std::size_t n = graph.node_count();
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t v = 1; v <= n; ++v) {
      bool has_in = v == 1, has_out = v == n;
      for (const Edge& e : kept) {
        if (e.to == v) has_in = true;
        if (e.from == v) has_out = true;
      }
      if (has_in && has_out) continue;
      for (auto it = kept.begin(); it != kept.end();) {
        if (it->from == v || it->to == v) {
          it = kept.erase(it);
          changed = true;
        } else {
          ++it;
        }
      }
    }
  }
  return kept;
}

// Breadth-first search from node 1 over `edges`.
inline bool reaches_output(std::size_t n, const std::vector<Edge>& edges) {
  std::vector<bool> seen(n + 1, false);
  std::vector<std::size_t> queue{1};
  seen[1] = true;
  while (!queue.empty()) {
    const std::size_t u = queue.back();
    queue.pop_back();
    for (const Edge& e : edges) {
      if (e.from == u && !seen[e.to]) {
        seen[e.to] = true;
        queue.push_back(e.to);
      }
    }
  }
  return seen[n];
}

// Erdos-Renyi on nodes 1..n from the same random stream as the library:
// one uniform draw per unordered pair in lexicographic order, kept when the
// draw is below p. Edges run low to high, then sources are fed from node 1
// and sinks drained into node n.
inline std::set<Edge> erdos_renyi(std::size_t n, double p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::set<Edge> edges;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = i + 1; j <= n; ++j) {
      if (unit(rng) < p) edges.insert({i, j});
    }
  }
  for (std::size_t j = 2; j <= n; ++j) {
    bool has_in = false;
    for (const Edge& e : edges) has_in |= e.to == j;
    if (!has_in) edges.insert({1, j});
  }
  for (std::size_t i = 1; i < n; ++i) {
    bool has_out = false;
    for (const Edge& e : edges) has_out |= e.from == i;
    if (!has_out) edges.insert({i, n});
  }
  return edges;
}

}  // namespace oracle
