// Copyright 2026 The DGNet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command implementations behind the dgnet CLI. Each writes its artifacts
// under the config's output directory, together with the resolved config.
// Failures are reported by throwing.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "dgnet/config.hpp"

namespace dgnet {

struct SampleEdge {
  std::size_t sample = 0;
  std::size_t stage = 0;
  std::size_t from = 0;
  std::size_t to = 0;
  double weight = 0.0;

  bool operator==(const SampleEdge&) const = default;
};

/// "sample,stage,i,j,weight"; weights round-trip exactly.
std::string sample_edges_csv(const std::vector<SampleEdge>& rows);
std::vector<SampleEdge> parse_sample_edges_csv(std::string_view text);

struct TrainOptions {
  std::optional<std::filesystem::path> resume;  // checkpoint to continue from
};

void cmd_train(RunConfig config, std::ostream& out, const TrainOptions& options = {});

/// Accuracy of a checkpoint on the eval split. Returns the accuracy.
double cmd_eval(RunConfig config, const std::filesystem::path& checkpoint, bool pruned,
                std::ostream& out);

void cmd_ablate(RunConfig config, std::ostream& out);

void cmd_cost(RunConfig config, std::ostream& out);

/// Per-sample connectivity of eval samples `samples` as DOT files and one
/// edge CSV. Without a checkpoint the freshly initialized network is used.
/// With `pruned`, only edges kept by thresholded inference are exported.
void cmd_export_graph(RunConfig config, const std::optional<std::filesystem::path>& checkpoint,
                      const std::vector<std::size_t>& samples, bool pruned, std::ostream& out);

void cmd_randwire_compare(RunConfig config, std::ostream& out);

}  // namespace dgnet
