// Copyright 2026 The DGNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "dgnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace dgnet {

Tensor<float> Dataset::gather(std::span<const std::size_t> indices) const {
  Shape shape = images.shape();
  const std::size_t per = images.numel() / shape[0];
  shape[0] = indices.size();
  std::vector<float> data(indices.size() * per);
  auto src = images.data();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    std::copy_n(src.begin() + indices[k] * per, per, data.begin() + k * per);
  }
  return Tensor<float>(std::move(shape), std::move(data));
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.images = gather(indices);
  out.classes = classes;
  for (std::size_t i : indices) out.labels.push_back(labels.at(i));
  return out;
}

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

Dataset load_cifar_binary(std::span<const std::filesystem::path> paths, std::size_t max_records) {
  std::vector<float> pixels;
  std::vector<int> labels;
  constexpr std::size_t plane = 32 * 32;
  for (const auto& path : paths) {
    const auto bytes = read_file(path);
    if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0) {
      throw std::runtime_error(path.string() + ": size " + std::to_string(bytes.size()) +
                               " is not a whole number of " +
                               std::to_string(kCifarRecordBytes) + "-byte records (truncated record)");
    }
    for (std::size_t off = 0; off < bytes.size(); off += kCifarRecordBytes) {
      if (max_records && labels.size() == max_records) break;
      const int label = bytes[off];
      if (label > 9) {
        throw std::runtime_error(path.string() + ": label byte " + std::to_string(label) +
                                 " at record " + std::to_string(off / kCifarRecordBytes) +
                                 " is not a CIFAR-10 class");
      }
      labels.push_back(label);
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t p = 0; p < plane; ++p) {
          const float v = static_cast<float>(bytes[off + 1 + c * plane + p]) / 255.0f;
          pixels.push_back((v - kCifarMean[c]) / kCifarStd[c]);
        }
      }
    }
  }
  if (labels.empty()) throw std::runtime_error("no CIFAR records read");
  Dataset data;
  data.classes = 10;
  data.images = Tensor<float>(Shape{labels.size(), 3, 32, 32}, std::move(pixels));
  data.labels = std::move(labels);
  return data;
}

Dataset load_cifar_binary(const std::filesystem::path& path, std::size_t max_records) {
  return load_cifar_binary(std::span<const std::filesystem::path>(&path, 1), max_records);
}

Dataset synth_dataset(const SynthSpec& spec) {
  if (spec.classes < 2) throw std::invalid_argument("synthetic data needs at least 2 classes");
  if (spec.per_class == 0 || spec.image_size == 0 || spec.channels == 0 || spec.bands == 0) {
    throw std::invalid_argument("synthetic data needs positive counts and sizes");
  }
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_int_distribution<std::size_t> band_pick(0, spec.bands - 1);

  const double pi = std::numbers::pi;
  const double jitter = std::min(spec.noise, 1.0);
  const std::size_t s = spec.image_size;
  const std::size_t count = spec.classes * spec.per_class;
  std::vector<float> pixels;
  pixels.reserve(count * spec.channels * s * s);
  std::vector<int> labels;

  for (std::size_t n = 0; n < count; ++n) {
    const std::size_t k = n % spec.classes;
    const double theta = pi * static_cast<double>(k) / static_cast<double>(spec.classes);
    const std::size_t band = spec.bands > 1 ? band_pick(rng) : 0;
    // Two to four cycles across the image, spread over the bands.
    const double cycles = 2.0 + 2.0 * static_cast<double>(band) /
                                    static_cast<double>(std::max<std::size_t>(spec.bands - 1, 1));
    const double phase = jitter * pi * unit(rng);
    const double contrast = 1.0 + 0.5 * jitter * unit(rng);
    const double freq = 2.0 * pi * cycles / static_cast<double>(s);
    for (std::size_t c = 0; c < spec.channels; ++c) {
      const double gain = 1.0 - 0.2 * static_cast<double>(c) / static_cast<double>(spec.channels);
      const double offset =
          spec.tint * std::cos(2.0 * pi * (static_cast<double>(k) / static_cast<double>(spec.classes) +
                                           static_cast<double>(c) / static_cast<double>(spec.channels)));
      for (std::size_t y = 0; y < s; ++y) {
        for (std::size_t x = 0; x < s; ++x) {
          const double u = static_cast<double>(x) * std::cos(theta) +
                           static_cast<double>(y) * std::sin(theta);
          const double v = offset + contrast * gain * std::sin(freq * u + phase) + spec.noise * normal(rng);
          pixels.push_back(static_cast<float>(v));
        }
      }
    }
    labels.push_back(static_cast<int>(k));
  }

  // Standardize each channel over the whole set.
  const std::size_t plane = s * s;
  for (std::size_t c = 0; c < spec.channels; ++c) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t n = 0; n < count; ++n) {
      const float* p = pixels.data() + (n * spec.channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum += p[i];
        sq += static_cast<double>(p[i]) * p[i];
      }
    }
    const double total = static_cast<double>(count * plane);
    const double mean = sum / total;
    const double stdev = std::sqrt(std::max(sq / total - mean * mean, 1e-12));
    for (std::size_t n = 0; n < count; ++n) {
      float* p = pixels.data() + (n * spec.channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        p[i] = static_cast<float>((p[i] - mean) / stdev);
      }
    }
  }

  Dataset data;
  data.classes = spec.classes;
  data.images = Tensor<float>(Shape{count, spec.channels, s, s}, std::move(pixels));
  data.labels = std::move(labels);
  return data;
}

DatasetSplit split_dataset(const Dataset& data, double eval_fraction, std::uint64_t seed) {
  if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) {
    throw std::invalid_argument("eval fraction must lie in (0,1)");
  }
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_eval = static_cast<std::size_t>(std::round(eval_fraction * data.size()));
  if (n_eval == 0 || n_eval >= data.size()) throw std::invalid_argument("degenerate split");
  std::vector<std::size_t> eval(order.begin(), order.begin() + n_eval);
  std::vector<std::size_t> train(order.begin() + n_eval, order.end());
  std::sort(eval.begin(), eval.end());
  std::sort(train.begin(), train.end());
  return {data.subset(train), data.subset(eval)};
}

}  // namespace dgnet
