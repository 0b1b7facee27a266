// Copyright 2026 The DGNet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Batched adjacency buffer. Element [b, j, i] holds the weight of edge i->j
// for sample b (nodes are 1-based in the API). Producers write whole
// columns, consumers read whole rows, and every stored weight stays linked to
// the router output it came from so gradients reach the routers.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "dgnet/ops.hpp"
#include "dgnet/tensor.hpp"

namespace dgnet {

#ifdef DGNET_DISABLE_BUFFER_CHECKS
inline constexpr bool kTrackBufferFill = false;
#else
inline constexpr bool kTrackBufferFill = true;
#endif

class BufferProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Detached N x N copy of one sample's adjacency matrix.
struct AdjacencySnapshot {
  std::size_t nodes = 0;
  std::vector<double> values;  // row-major, row = target, column = source

  double weight(std::size_t from, std::size_t to) const {
    return values[(to - 1) * nodes + (from - 1)];
  }
  double& weight(std::size_t from, std::size_t to) {
    return values[(to - 1) * nodes + (from - 1)];
  }
  bool strictly_lower_triangular() const;
};

template <typename T>
class AdjacencyBuffer {
 public:
  AdjacencyBuffer(std::size_t batch, std::size_t nodes, bool track_fill = kTrackBufferFill);

  std::size_t batch() const { return batch_; }
  std::size_t nodes() const { return nodes_; }

  /// Stores weights[b, k] at [b, targets[k], node]. `weights` is [B, |targets|].
  void write_outgoing(std::size_t node, const Tensor<T>& weights,
                      std::span<const std::size_t> targets);

  /// Row of node j as a [B, j-1] tensor (column i-1 holds edge i->j). With
  /// fill tracking on, every source in `expected_sources` must have written
  /// its edge to j already.
  Tensor<T> read_incoming(Tape<T>& tape, std::size_t node,
                          std::span<const std::size_t> expected_sources = {}) const;

  AdjacencySnapshot snapshot(std::size_t sample) const;

  /// Plain [B,N,N] values (no gradient linkage).
  const Tensor<T>& values() const { return values_; }
  bool filled(std::size_t from, std::size_t to) const;

 private:
  std::size_t cell(std::size_t from, std::size_t to) const { return (to - 1) * nodes_ + (from - 1); }
  void check_node(std::size_t node) const;

  std::size_t batch_;
  std::size_t nodes_;
  bool track_fill_;
  Tensor<T> values_;
  std::vector<std::optional<ops::ColumnRef<T>>> refs_;
  std::vector<bool> filled_;
};

extern template class AdjacencyBuffer<float>;
extern template class AdjacencyBuffer<double>;

}  // namespace dgnet
