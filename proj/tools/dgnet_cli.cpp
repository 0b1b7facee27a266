// Copyright 2026 The DGNet Authors
// SPDX-License-Identifier: Apache-2.0
//
// dgnet command-line entry point.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dgnet/commands.hpp"

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* sub, Common& common) {
  sub->add_option("-c,--config", common.config_path, "JSON run config (defaults apply if omitted)");
  sub->allow_extras();
  sub->footer("Any scalar field can be overridden as --section.key=value, e.g. --training.lr=0.05");
}

std::vector<std::string> collect_overrides(CLI::App* sub) {
  std::vector<std::string> out;
  for (const std::string& arg : sub->remaining()) {
    if (arg.rfind("--", 0) != 0 || arg.find('=') == std::string::npos ||
        arg.find('.') == std::string::npos) {
      throw dgnet::ConfigError("unrecognized argument '" + arg + "'");
    }
    out.push_back(arg);
  }
  return out;
}

dgnet::RunConfig resolve(const Common& common, CLI::App* sub,
                         const std::optional<std::string>& checkpoint = {}) {
  const auto overrides = collect_overrides(sub);
  if (!common.config_path.empty()) return dgnet::load_run_config(common.config_path, overrides);
  if (checkpoint) {
    return dgnet::parse_run_config(dgnet::read_checkpoint(*checkpoint).config_text, overrides);
  }
  return dgnet::parse_run_config("{}", overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic graph networks: training, evaluation and connectivity analysis"};
  app.require_subcommand(1);

  Common train_args, eval_args, ablate_args, cost_args, export_args, randwire_args;
  std::string resume, eval_ckpt, export_ckpt;
  bool eval_pruned = false, export_pruned = false;
  std::vector<std::size_t> samples{0};

  auto* train = app.add_subcommand("train", "Train one model; writes checkpoint.bin and metrics.csv");
  add_common(train, train_args);
  train->add_option("--resume", resume, "Continue from a checkpoint");

  auto* eval = app.add_subcommand("eval", "Evaluation-split accuracy of a checkpoint");
  add_common(eval, eval_args);
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval->add_flag("--pruned", eval_pruned, "Thresholded pruned inference (dynamic models)");

  auto* ablate = app.add_subcommand("ablate", "baseline vs static_alpha vs dynamic over seeds");
  add_common(ablate, ablate_args);

  auto* cost = app.add_subcommand("cost", "Parameter and Multi-Add report");
  add_common(cost, cost_args);

  auto* exporter = app.add_subcommand("export-graph", "Per-sample connectivity as DOT and CSV");
  add_common(exporter, export_args);
  exporter->add_option("--checkpoint", export_ckpt, "Checkpoint file (fresh network if omitted)");
  exporter->add_option("--samples", samples, "Eval-split sample indices")->delimiter(',');
  exporter->add_flag("--pruned", export_pruned, "Export only edges kept by pruned inference");

  auto* randwire = app.add_subcommand("randwire-compare",
                                      "Static ER/BA/WS wirings against the dynamic model");
  add_common(randwire, randwire_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      dgnet::TrainOptions options;
      if (!resume.empty()) options.resume = resume;
      dgnet::cmd_train(resolve(train_args, train), std::cout, options);
    } else if (*eval) {
      dgnet::cmd_eval(resolve(eval_args, eval, eval_ckpt), eval_ckpt, eval_pruned, std::cout);
    } else if (*ablate) {
      dgnet::cmd_ablate(resolve(ablate_args, ablate), std::cout);
    } else if (*cost) {
      dgnet::cmd_cost(resolve(cost_args, cost), std::cout);
    } else if (*exporter) {
      std::optional<std::filesystem::path> ckpt;
      std::optional<std::string> ckpt_text;
      if (!export_ckpt.empty()) {
        ckpt = export_ckpt;
        ckpt_text = export_ckpt;
      }
      dgnet::cmd_export_graph(resolve(export_args, exporter, ckpt_text), ckpt, samples,
                              export_pruned, std::cout);
    } else if (*randwire) {
      dgnet::cmd_randwire_compare(resolve(randwire_args, randwire), std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
