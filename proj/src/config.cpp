// Copyright 2026 The DGNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "dgnet/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include <nlohmann/json.hpp>

namespace dgnet {

using nlohmann::json;

namespace {

// Reads one JSON object, remembering which keys were consumed so leftovers
// can be reported.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(where() + " must be an object");
  }

  bool has(const std::string& key) const { return node_.contains(key); }

  template <typename V>
  void get(const std::string& key, V& out) {
    if (!node_.contains(key)) return;
    seen_.insert(key);
    out = convert<V>(node_.at(key), path_ + "." + key);
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    return Section(node_.at(key), path_ + "." + key);
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return node_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : node_.items()) {
      if (!seen_.contains(key)) throw ConfigError("unknown key '" + path_ + "." + key + "'");
    }
  }

  template <typename V>
  static V convert(const json& value, const std::string& path) {
    if constexpr (std::is_same_v<V, bool>) {
      if (!value.is_boolean()) throw ConfigError(path + " must be a boolean");
    } else if constexpr (std::is_unsigned_v<V>) {
      if (!value.is_number_unsigned()) throw ConfigError(path + " must be a non-negative integer");
    } else if constexpr (std::is_floating_point_v<V>) {
      if (!value.is_number()) throw ConfigError(path + " must be a number");
    } else if constexpr (std::is_same_v<V, std::string>) {
      if (!value.is_string()) throw ConfigError(path + " must be a string");
    }
    try {
      return value.get<V>();
    } catch (const json::exception& e) {
      throw ConfigError(path + ": " + e.what());
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_pattern(Section s, WiringPattern& pattern) {
  std::string kind = to_string(pattern.kind);
  s.get("kind", kind);
  try {
    pattern.kind = parse_pattern_kind(kind);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  s.get("p", pattern.p);
  s.get("m", pattern.m);
  s.get("k", pattern.k);
  s.get("seed", pattern.seed);
  s.finish();
}

json pattern_json(const WiringPattern& p) {
  return {{"kind", to_string(p.kind)}, {"p", p.p}, {"m", p.m}, {"k", p.k}, {"seed", p.seed}};
}

void read_architecture(Section s, RunConfig& c) {
  s.get("kernel", c.model.kernel);
  s.get("norm_groups", c.model.norm_groups);
  if (s.has("stages")) {
    const json& stages = s.raw("stages");
    if (!stages.is_array()) throw ConfigError("architecture.stages must be an array");
    c.model.stages.clear();
    for (std::size_t i = 0; i < stages.size(); ++i) {
      Section st(stages[i], "architecture.stages[" + std::to_string(i) + "]");
      StageSpec spec;
      st.get("nodes", spec.nodes);
      st.get("channels", spec.channels);
      st.get("stride", spec.stride);
      st.finish();
      c.model.stages.push_back(spec);
    }
  }
  if (s.has("pattern")) read_pattern(s.child("pattern"), c.model.pattern);
  if (s.has("baseline_pattern")) read_pattern(s.child("baseline_pattern"), c.baseline_pattern);
  s.finish();
}

void read_routing(Section s, RunConfig& c) {
  std::string mode = to_string(c.model.mode);
  s.get("mode", mode);
  try {
    c.model.mode = parse_connectivity_mode(mode);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  std::string threshold = c.threshold.mode == ThresholdMode::off ? "off" : "fixed";
  s.get("threshold", threshold);
  if (threshold == "off") {
    c.threshold.mode = ThresholdMode::off;
  } else if (threshold == "fixed") {
    c.threshold.mode = ThresholdMode::fixed;
  } else {
    throw ConfigError("routing.threshold must be \"off\" or \"fixed\", got \"" + threshold + "\"");
  }
  s.get("tau", c.threshold.tau);
  s.get("per_node_tau", c.threshold.per_node);
  s.get("router_init_std", c.model.router_init.weight_std);
  s.get("router_bias_init", c.model.router_init.bias);
  s.get("alpha_init", c.model.alpha_init);
  s.finish();
}

void read_training(Section s, RunConfig& c) {
  TrainConfig& t = c.train;
  s.get("epochs", t.epochs);
  s.get("batch_size", t.batch_size);
  s.get("lr", t.lr);
  s.get("momentum", t.momentum);
  s.get("weight_decay", t.weight_decay);
  s.get("smoothing", t.smoothing);
  s.get("warmup_epochs", t.warmup_epochs);
  s.get("seed", t.seed);
  s.get("freeze_alpha", t.freeze_alpha);
  s.get("eval_pruned", t.eval_pruned);
  s.get("seeds", c.seeds);
  s.get("graph_seed", c.graph_seed);
  s.finish();
}

void read_dataset(Section s, RunConfig& c) {
  DatasetConfig& d = c.dataset;
  s.get("source", d.source);
  s.get("paths", d.paths);
  s.get("max_records", d.max_records);
  s.get("classes", d.synth.classes);
  s.get("per_class", d.synth.per_class);
  s.get("image_size", d.synth.image_size);
  s.get("channels", d.synth.channels);
  s.get("noise", d.synth.noise);
  s.get("bands", d.synth.bands);
  s.get("tint", d.synth.tint);
  s.get("seed", d.synth.seed);
  s.get("eval_fraction", d.eval_fraction);
  s.get("split_seed", d.split_seed);
  s.finish();
}

void apply_override(json& doc, const std::string& raw) {
  std::string text = raw;
  if (text.rfind("--", 0) == 0) text.erase(0, 2);
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + raw + "' is not of the form section.key=value");
  }
  const std::string path = text.substr(0, eq);
  const std::string value_text = text.substr(eq + 1);
  if (path.find('.') == std::string::npos) {
    throw ConfigError("override '" + raw + "' needs a section, as in training.lr=0.05");
  }
  json value = json::parse(value_text, nullptr, false);
  if (value.is_discarded()) value = value_text;  // bare strings such as res

  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (key.empty()) throw ConfigError("override '" + raw + "' has an empty key");
    if (!node->is_object()) throw ConfigError("override '" + raw + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

}  // namespace

void RunConfig::check() const {
  try {
    model.check();
    threshold.check();
    train.check();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (dataset.source != "synthetic" && dataset.source != "cifar") {
    throw ConfigError("dataset.source must be \"synthetic\" or \"cifar\", got \"" + dataset.source +
                      "\"");
  }
  if (dataset.source == "cifar" && dataset.paths.empty()) {
    throw ConfigError("dataset.paths must list CIFAR-10 binary files");
  }
  if (!(dataset.eval_fraction > 0.0 && dataset.eval_fraction < 1.0)) {
    throw ConfigError("dataset.eval_fraction must lie in (0,1)");
  }
  if (seeds.empty()) throw ConfigError("training.seeds must not be empty");
}

RunConfig parse_run_config(const std::string& json_text, const std::vector<std::string>& overrides) {
  json doc = json::parse(json_text, nullptr, false, true);
  if (doc.is_discarded()) throw ConfigError("config is not valid JSON");
  for (const auto& o : overrides) apply_override(doc, o);

  RunConfig config;
  Section root(doc, "");
  for (const auto& [key, value] : doc.items()) {
    if (key == "architecture") {
      read_architecture(root.child(key), config);
    } else if (key == "routing") {
      read_routing(root.child(key), config);
    } else if (key == "training") {
      read_training(root.child(key), config);
    } else if (key == "dataset") {
      read_dataset(root.child(key), config);
    } else if (key == "output") {
      Section out = root.child(key);
      std::string dir = config.output_dir.string();
      out.get("dir", dir);
      out.finish();
      config.output_dir = dir;
    } else {
      throw ConfigError("unknown section '" + key + "'");
    }
  }
  config.model.classes = config.dataset.synth.classes;
  config.model.in_channels = config.dataset.synth.channels;
  if (config.dataset.source == "cifar") {
    config.model.classes = 10;
    config.model.in_channels = 3;
  }
  config.check();
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), overrides);
}

std::string dump_run_config(const RunConfig& c) {
  json stages = json::array();
  for (const auto& s : c.model.stages) {
    stages.push_back({{"nodes", s.nodes}, {"channels", s.channels}, {"stride", s.stride}});
  }
  json doc;
  doc["architecture"] = {{"kernel", c.model.kernel},
                         {"norm_groups", c.model.norm_groups},
                         {"stages", stages},
                         {"pattern", pattern_json(c.model.pattern)},
                         {"baseline_pattern", pattern_json(c.baseline_pattern)}};
  doc["routing"] = {{"mode", to_string(c.model.mode)},
                    {"threshold", c.threshold.mode == ThresholdMode::off ? "off" : "fixed"},
                    {"tau", c.threshold.tau},
                    {"per_node_tau", c.threshold.per_node},
                    {"router_init_std", c.model.router_init.weight_std},
                    {"router_bias_init", c.model.router_init.bias},
                    {"alpha_init", c.model.alpha_init}};
  const TrainConfig& t = c.train;
  doc["training"] = {{"epochs", t.epochs},
                     {"batch_size", t.batch_size},
                     {"lr", t.lr},
                     {"momentum", t.momentum},
                     {"weight_decay", t.weight_decay},
                     {"smoothing", t.smoothing},
                     {"warmup_epochs", t.warmup_epochs},
                     {"seed", t.seed},
                     {"freeze_alpha", t.freeze_alpha},
                     {"eval_pruned", t.eval_pruned},
                     {"seeds", c.seeds},
                     {"graph_seed", c.graph_seed}};
  const DatasetConfig& d = c.dataset;
  doc["dataset"] = {{"source", d.source},
                    {"paths", d.paths},
                    {"max_records", d.max_records},
                    {"classes", d.synth.classes},
                    {"per_class", d.synth.per_class},
                    {"image_size", d.synth.image_size},
                    {"channels", d.synth.channels},
                    {"noise", d.synth.noise},
                    {"bands", d.synth.bands},
                    {"tint", d.synth.tint},
                    {"seed", d.synth.seed},
                    {"eval_fraction", d.eval_fraction},
                    {"split_seed", d.split_seed}};
  doc["output"] = {{"dir", c.output_dir.string()}};
  return doc.dump(2) + "\n";
}

DatasetSplit load_dataset(RunConfig& config) {
  Dataset all;
  if (config.dataset.source == "cifar") {
    std::vector<std::filesystem::path> paths(config.dataset.paths.begin(),
                                             config.dataset.paths.end());
    all = load_cifar_binary(paths, config.dataset.max_records);
  } else {
    all = synth_dataset(config.dataset.synth);
  }
  config.model.classes = all.classes;
  config.model.in_channels = all.images.dim(1);
  return split_dataset(all, config.dataset.eval_fraction, config.dataset.split_seed);
}

}  // namespace dgnet
