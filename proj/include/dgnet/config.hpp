// Copyright 2026 The DGNet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Declarative run configuration: one JSON document with the sections
// architecture, routing, training, dataset and output. Unknown keys are
// errors. Dotted overrides ("training.lr=0.05") patch the document before it
// is decoded.

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "dgnet/data.hpp"
#include "dgnet/model.hpp"
#include "dgnet/train.hpp"

namespace dgnet {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetConfig {
  std::string source = "synthetic";  // "synthetic" or "cifar"
  std::vector<std::string> paths;    // cifar binary batch files
  std::size_t max_records = 0;       // cifar: 0 reads everything
  SynthSpec synth;
  double eval_fraction = 0.25;
  std::uint64_t split_seed = 0;
};

struct RunConfig {
  ModelConfig model;  // classes and in_channels follow the dataset
  WiringPattern baseline_pattern{PatternKind::res};
  ThresholdPolicy threshold{ThresholdMode::fixed, 0.05, {}};
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0, 1, 2};  // ablate and randwire-compare
  std::uint64_t graph_seed = 0;               // randwire-compare generators
  DatasetConfig dataset;
  std::filesystem::path output_dir = "runs/default";

  void check() const;
};

/// Decodes a config document. Missing keys keep their defaults.
RunConfig parse_run_config(const std::string& json_text,
                           const std::vector<std::string>& overrides = {});
RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides = {});

/// Full document with every field, suitable for parse_run_config.
std::string dump_run_config(const RunConfig& config);

/// Loads or synthesizes the dataset and splits it; sets model classes and
/// input channels from the data.
DatasetSplit load_dataset(RunConfig& config);

}  // namespace dgnet
