// Copyright 2026 The DGNet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor operations. Every operation takes the tape it records
// onto; an operation is recorded only when the tape is recording and at least
// one input requires a gradient.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "dgnet/tensor.hpp"

namespace dgnet::ops {

enum class Activation { relu, sigmoid };

/// Cross-correlation of `input` [B,C_in,H,W] with a square `kernel`
/// [C_out,C_in,k,k]; output is [B,C_out,H',W'] with
/// H' = (H + 2*padding - k) / stride + 1.
template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& kernel,
                 std::size_t stride, std::size_t padding);

/// Adds bias[c] to every element of channel c of a [B,C,H,W] tensor.
template <typename T>
Tensor<T> add_channel_bias(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& bias);

/// Per-sample group normalization of a [B,C,H,W] tensor: channels are split
/// into `groups` contiguous groups, each normalized to zero mean and unit
/// variance over its channels and pixels, then scaled by gamma[c] and
/// shifted by beta[c]. Samples never interact.
template <typename T>
Tensor<T> group_norm(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& gamma,
                     const Tensor<T>& beta, std::size_t groups, double eps = 1e-5);

template <typename T>
Tensor<T> global_avg_pool(Tape<T>& tape, const Tensor<T>& input);

/// input [B,C_in] * weight [C_in,C_out] + bias [C_out].
template <typename T>
Tensor<T> fully_connected(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& weight,
                          const Tensor<T>& bias);

/// Sigmoid outputs are clamped into the open interval (0,1); relu has
/// subgradient 0 at the origin.
template <typename T>
Tensor<T> elementwise(Tape<T>& tape, const Tensor<T>& input, Activation kind);

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& input) {
  return elementwise(tape, input, Activation::relu);
}

template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& input) {
  return elementwise(tape, input, Activation::sigmoid);
}

/// Batch mean of the cross-entropy against targets
/// (1 - smoothing) * onehot + smoothing / K.
template <typename T>
Tensor<T> cross_entropy_smoothed(Tape<T>& tape, const Tensor<T>& logits,
                                 std::span<const int> labels, double smoothing);

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& input, T factor);

template <typename T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& input, Shape shape);

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& input);

template <typename T>
Tensor<T> mean(Tape<T>& tape, const Tensor<T>& input);

/// out[b] = sum_i weights[b,i] * inputs[i][b], accumulated in ascending i.
/// `weights` is [B,n] or [1,n] (shared across the batch). Undefined inputs
/// are skipped and receive no gradient.
template <typename T>
Tensor<T> weighted_sum(Tape<T>& tape, std::span<const Tensor<T>> inputs,
                       const Tensor<T>& weights);

/// Reference to one column of a [B,n] (or [1,n]) tensor.
template <typename T>
struct ColumnRef {
  Tensor<T> source;
  std::size_t column = 0;
};

/// Assembles a [batch, columns.size()] tensor whose i-th column is copied
/// from `columns[i]`, or zero when that entry is empty. Gradients flow back
/// to the referenced sources.
template <typename T>
Tensor<T> gather_columns(Tape<T>& tape, std::span<const std::optional<ColumnRef<T>>> columns,
                         std::size_t batch);

}  // namespace dgnet::ops
