// Copyright 2026 The DGNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "dgnet/commands.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace dgnet {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void prepare_output(const RunConfig& config) {
  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec) {
    throw std::runtime_error("cannot create " + config.output_dir.string() + ": " + ec.message());
  }
  write_text(config.output_dir / "config.json", dump_run_config(config));
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
  return buf;
}

TrainState<float> restored_state(const RunConfig& config, const fs::path& checkpoint) {
  const Checkpoint ck = read_checkpoint(checkpoint);
  if (ck.scalar_bytes != sizeof(float)) throw std::runtime_error("checkpoint is not 32-bit");
  TrainState<float> state(Network<float>(config.model, config.train.seed));
  restore_checkpoint(state, ck);
  return state;
}

}  // namespace

std::string sample_edges_csv(const std::vector<SampleEdge>& rows) {
  std::string out = "sample,stage,i,j,weight\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%zu,%.17g\n", r.sample, r.stage, r.from, r.to,
                  r.weight);
    out += buf;
  }
  return out;
}

std::vector<SampleEdge> parse_sample_edges_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::getline(in, line);
  if (line != "sample,stage,i,j,weight") throw std::invalid_argument("unexpected edge CSV header");
  std::vector<SampleEdge> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    SampleEdge r;
    char tail = 0;
    if (std::sscanf(line.c_str(), "%zu,%zu,%zu,%zu,%lf%c", &r.sample, &r.stage, &r.from, &r.to,
                    &r.weight, &tail) != 5) {
      throw std::invalid_argument("malformed edge CSV row: " + line);
    }
    rows.push_back(r);
  }
  return rows;
}

void cmd_train(RunConfig config, std::ostream& out, const TrainOptions& options) {
  const DatasetSplit data = load_dataset(config);
  prepare_output(config);
  const std::string config_text = dump_run_config(config);

  TrainState<float> state = options.resume ? restored_state(config, *options.resume)
                                           : TrainState<float>(Network<float>(config.model,
                                                                              config.train.seed));
  const fs::path checkpoint = config.output_dir / "checkpoint.bin";
  auto progress = [&](const MetricRow& row) {
    if (!row.eval_acc) return;
    out << "epoch " << state.epoch + 1 << "/" << config.train.epochs << "  step " << row.step + 1
        << "  loss " << row.loss << "  eval " << percent(*row.eval_acc) << "\n";
    // The epoch counter advances after this callback; save the resumable value.
    ++state.epoch;
    save_checkpoint(checkpoint, state, config_text);
    --state.epoch;
  };
  const RunResult result = run_training(state, config.train, data, config.threshold, progress);
  save_checkpoint(checkpoint, state, config_text);
  write_text(config.output_dir / "metrics.csv", metrics_csv(result.metrics));
  out << "final eval accuracy " << percent(result.eval_accuracy) << "\n";
}

double cmd_eval(RunConfig config, const fs::path& checkpoint, bool pruned, std::ostream& out) {
  const DatasetSplit data = load_dataset(config);
  const TrainState<float> state = restored_state(config, checkpoint);
  std::optional<ThresholdPolicy> policy;
  if (pruned) {
    if (config.model.mode != ConnectivityMode::dynamic) {
      throw std::invalid_argument("pruned evaluation needs a dynamic model");
    }
    policy = config.threshold;
  }
  const double acc = evaluate(state.network, data.eval, config.train.batch_size, policy);
  out << "eval accuracy " << percent(acc) << " on " << data.eval.size() << " samples"
      << (pruned ? " (pruned)" : "") << "\n";
  return acc;
}

void cmd_ablate(RunConfig config, std::ostream& out) {
  const DatasetSplit data = load_dataset(config);
  prepare_output(config);
  const auto arms = ablation_arms(config.model, config.baseline_pattern);
  const ComparisonReport report = compare_arms(
      arms, config.train, data, config.seeds, config.threshold,
      [&](const std::string& arm, std::uint64_t seed, double acc) {
        out << arm << " seed " << seed << ": " << percent(acc) << "\n";
      });
  const std::string table = report.table();
  write_text(config.output_dir / "ablation.txt", table);
  out << table;
}

void cmd_cost(RunConfig config, std::ostream& out) {
  // Only shapes are needed; avoid loading the data just to learn them.
  Shape input{config.dataset.synth.channels, config.dataset.synth.image_size,
              config.dataset.synth.image_size};
  config.model.in_channels = config.dataset.synth.channels;
  config.model.classes = config.dataset.synth.classes;
  if (config.dataset.source == "cifar") {
    input = Shape{3, 32, 32};
    config.model.in_channels = 3;
    config.model.classes = 10;
  }
  prepare_output(config);
  const Network<float> net(config.model, config.train.seed);
  const std::string text = count_cost(net, input).to_text();
  write_text(config.output_dir / "cost.txt", text);
  out << text;
}

void cmd_export_graph(RunConfig config, const std::optional<fs::path>& checkpoint,
                      const std::vector<std::size_t>& samples, bool pruned, std::ostream& out) {
  const DatasetSplit data = load_dataset(config);
  prepare_output(config);
  const TrainState<float> state =
      checkpoint ? restored_state(config, *checkpoint)
                 : TrainState<float>(Network<float>(config.model, config.train.seed));
  const Network<float>& net = state.network;
  if (samples.empty()) throw std::invalid_argument("no sample indices requested");
  for (std::size_t s : samples) {
    if (s >= data.eval.size()) {
      throw std::out_of_range("sample " + std::to_string(s) + " outside eval split of " +
                              std::to_string(data.eval.size()));
    }
  }
  if (pruned && net.mode() != ConnectivityMode::dynamic) {
    throw std::invalid_argument("pruned export needs a dynamic model");
  }

  const Tensor<float> batch = data.eval.gather(samples);
  std::vector<std::vector<EdgeWeights>> weights(samples.size());  // [sample][stage]
  std::vector<StageGraph> graphs;
  for (const auto& stage : net.stages()) graphs.push_back(stage.graph);

  if (net.mode() == ConnectivityMode::dynamic) {
    if (pruned) {
      const auto result = pruned_forward(net, batch, config.threshold, PrunedExecution::skip);
      for (std::size_t b = 0; b < samples.size(); ++b) {
        for (std::size_t s = 0; s < graphs.size(); ++s) {
          const PrunedStage& plan = result.plans[s][b];
          EdgeWeights w;
          for (const Edge& e : plan.active_edges) w[e] = plan.weights.weight(e.from, e.to);
          weights[b].push_back(std::move(w));
        }
      }
    } else {
      Tape<float> tape(false);
      const auto result = dynamic_forward(tape, net, batch);
      for (std::size_t b = 0; b < samples.size(); ++b) {
        for (std::size_t s = 0; s < graphs.size(); ++s) {
          const AdjacencySnapshot snap = result.buffers[s].snapshot(b);
          EdgeWeights w;
          for (const Edge& e : graphs[s].edges()) w[e] = snap.weight(e.from, e.to);
          weights[b].push_back(std::move(w));
        }
      }
    }
  } else {
    const auto wiring = own_wiring(net);
    for (std::size_t b = 0; b < samples.size(); ++b) {
      for (std::size_t s = 0; s < graphs.size(); ++s) {
        EdgeWeights w;
        for (const auto& [e, t] : wiring[s].weights) w[e] = t.item();
        weights[b].push_back(std::move(w));
      }
    }
  }

  const fs::path dir = config.output_dir / "graphs";
  fs::create_directories(dir);
  std::vector<SampleEdge> rows;
  for (std::size_t b = 0; b < samples.size(); ++b) {
    for (std::size_t s = 0; s < graphs.size(); ++s) {
      const EdgeWeights& w = weights[b][s];
      StageGraph shown = graphs[s];
      if (pruned) {
        std::vector<Edge> kept;
        for (const auto& [e, v] : w) kept.push_back(e);
        shown = StageGraph(graphs[s].node_count(), std::move(kept));
      }
      const std::string name =
          "sample" + std::to_string(samples[b]) + "_stage" + std::to_string(s + 1);
      write_text(dir / (name + ".dot"), export_dot(shown, w, name));
      for (const auto& [e, v] : w) rows.push_back({samples[b], s + 1, e.from, e.to, v});
    }
  }
  write_text(config.output_dir / "edges.csv", sample_edges_csv(rows));
  out << "wrote " << samples.size() * graphs.size() << " DOT files to " << dir.string() << " and "
      << rows.size() << " edge rows to " << (config.output_dir / "edges.csv").string() << "\n";
}

void cmd_randwire_compare(RunConfig config, std::ostream& out) {
  const DatasetSplit data = load_dataset(config);
  prepare_output(config);
  const auto arms = randwire_arms(config.model, config.graph_seed);
  const ComparisonReport report = compare_arms(
      arms, config.train, data, config.seeds, config.threshold,
      [&](const std::string& arm, std::uint64_t seed, double acc) {
        out << arm << " seed " << seed << ": " << percent(acc) << "\n";
      });
  const std::string table = report.table();
  write_text(config.output_dir / "randwire.txt", table);
  out << table;
}

}  // namespace dgnet
