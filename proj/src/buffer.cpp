// Copyright 2026 The DGNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "dgnet/buffer.hpp"

#include <string>

namespace dgnet {

bool AdjacencySnapshot::strictly_lower_triangular() const {
  for (std::size_t to = 1; to <= nodes; ++to) {
    for (std::size_t from = to; from <= nodes; ++from) {
      if (weight(from, to) != 0.0) return false;
    }
  }
  return true;
}

template <typename T>
AdjacencyBuffer<T>::AdjacencyBuffer(std::size_t batch, std::size_t nodes, bool track_fill)
    : batch_(batch),
      nodes_(nodes),
      track_fill_(track_fill),
      values_(Shape{batch, nodes, nodes}),
      refs_(nodes * nodes),
      filled_(nodes * nodes, false) {}

template <typename T>
void AdjacencyBuffer<T>::check_node(std::size_t node) const {
  if (node < 1 || node > nodes_) {
    throw std::out_of_range("buffer node " + std::to_string(node) + " outside [1," +
                            std::to_string(nodes_) + "]");
  }
}

template <typename T>
void AdjacencyBuffer<T>::write_outgoing(std::size_t node, const Tensor<T>& weights,
                                        std::span<const std::size_t> targets) {
  check_node(node);
  if (targets.empty()) return;
  if (weights.rank() != 2 || weights.dim(0) != batch_ || weights.dim(1) != targets.size()) {
    throw ShapeError("write_outgoing: weights " + shape_string(weights.shape()) +
                     " do not match batch " + std::to_string(batch_) + " x " +
                     std::to_string(targets.size()) + " targets");
  }
  for (std::size_t to : targets) {
    check_node(to);
    if (to <= node) {
      throw BufferProtocolError("order violation: node " + std::to_string(node) +
                                " cannot write to node " + std::to_string(to));
    }
    if (track_fill_ && filled_[cell(node, to)]) {
      throw BufferProtocolError("double write of edge " + std::to_string(node) + "->" +
                                std::to_string(to));
    }
  }
  auto v = values_.mutable_data();
  auto w = weights.data();
  const std::size_t width = targets.size();
  for (std::size_t k = 0; k < width; ++k) {
    const std::size_t c = cell(node, targets[k]);
    for (std::size_t b = 0; b < batch_; ++b) v[b * nodes_ * nodes_ + c] = w[b * width + k];
    refs_[c] = ops::ColumnRef<T>{weights, k};
    filled_[c] = true;
  }
}

template <typename T>
Tensor<T> AdjacencyBuffer<T>::read_incoming(Tape<T>& tape, std::size_t node,
                                            std::span<const std::size_t> expected_sources) const {
  check_node(node);
  if (node == 1) throw std::invalid_argument("read_incoming: node 1 has no incoming row");
  if (track_fill_) {
    for (std::size_t from : expected_sources) {
      if (from >= node || !filled_[cell(from, node)]) {
        throw BufferProtocolError("read of node " + std::to_string(node) +
                                  " before node " + std::to_string(from) + " wrote its edge");
      }
    }
  }
  std::vector<std::optional<ops::ColumnRef<T>>> row(refs_.begin() + cell(1, node),
                                                    refs_.begin() + cell(node, node));
  return ops::gather_columns<T>(tape, row, batch_);
}

template <typename T>
AdjacencySnapshot AdjacencyBuffer<T>::snapshot(std::size_t sample) const {
  if (sample >= batch_) throw std::out_of_range("snapshot sample " + std::to_string(sample));
  AdjacencySnapshot snap{nodes_, std::vector<double>(nodes_ * nodes_)};
  auto v = values_.data();
  for (std::size_t k = 0; k < nodes_ * nodes_; ++k) {
    snap.values[k] = static_cast<double>(v[sample * nodes_ * nodes_ + k]);
  }
  return snap;
}

template <typename T>
bool AdjacencyBuffer<T>::filled(std::size_t from, std::size_t to) const {
  check_node(from);
  check_node(to);
  return filled_[cell(from, to)];
}

template class AdjacencyBuffer<float>;
template class AdjacencyBuffer<double>;

}  // namespace dgnet
