// Copyright 2026 The DGNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dgnet/tensor.hpp"

namespace dgnet {

struct Dataset {
  Tensor<float> images;  // [M,C,H,W]
  std::vector<int> labels;
  std::size_t classes = 0;

  std::size_t size() const { return labels.size(); }
  /// Rows `indices` as a batch.
  Tensor<float> gather(std::span<const std::size_t> indices) const;
  Dataset subset(std::span<const std::size_t> indices) const;
};

struct DatasetSplit {
  Dataset train;
  Dataset eval;
};

inline constexpr std::size_t kCifarRecordBytes = 1 + 3 * 32 * 32;
// Per-channel CIFAR-10 statistics applied after scaling pixels to [0,1].
inline constexpr float kCifarMean[3] = {0.4914f, 0.4822f, 0.4465f};
inline constexpr float kCifarStd[3] = {0.2470f, 0.2435f, 0.2616f};

/// Parses CIFAR-10 binary records (1 label byte + 3072 planar RGB bytes).
/// `max_records` = 0 reads every record.
Dataset load_cifar_binary(const std::filesystem::path& path, std::size_t max_records = 0);
Dataset load_cifar_binary(std::span<const std::filesystem::path> paths,
                          std::size_t max_records = 0);

struct SynthSpec {
  std::size_t classes = 4;
  std::size_t per_class = 200;
  std::size_t image_size = 16;
  std::size_t channels = 3;
  /// Nuisance amplitude: pixel noise std, plus phase and contrast jitter that
  /// saturate at 1. Zero gives identical images within a class.
  double noise = 0.5;
  /// Frequency bands per class; each sample draws one. Values above 1 make a
  /// class a mixture of visually distinct sub-types.
  std::size_t bands = 1;
  /// Per-channel mean offset tied to the class (a weak colour cue),
  /// tint*cos(2*pi*(k/K + c/C)) for class k and channel c.
  double tint = 0.0;
  std::uint64_t seed = 0;
};

/// Oriented sinusoidal gratings: class k has orientation k*pi/K. Samples are
/// interleaved by class.
Dataset synth_dataset(const SynthSpec& spec);

/// Deterministic disjoint split: the first `eval_fraction` of a seeded
/// permutation becomes the evaluation set.
DatasetSplit split_dataset(const Dataset& data, double eval_fraction, std::uint64_t seed);

}  // namespace dgnet
