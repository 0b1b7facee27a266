// Copyright 2026 The DGNet Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <numeric>

#include "fixtures.hpp"

using namespace dgnet;
using fixture::randn;

TEST_CASE("network structure") {
  ModelConfig c;
  c.in_channels = 3;
  c.classes = 4;
  c.stages = {{4, 8, 1}, {5, 16, 2}};
  const Network<float> net(c, 1);
  REQUIRE(net.stages().size() == 2);
  const auto& s1 = net.stages()[1];
  CHECK(s1.nodes.size() == 5);
  CHECK(s1.node(1).kernel.shape() == Shape{16, 8, 3, 3});
  CHECK(s1.node(1).stride == 2);
  CHECK(s1.node(2).kernel.shape() == Shape{16, 16, 3, 3});
  CHECK(s1.node(5).role == NodeRole::output);
  CHECK_FALSE(s1.node(5).kernel.defined());
  CHECK_FALSE(s1.node(5).router);
  for (std::size_t j = 1; j < 5; ++j) {
    REQUIRE(s1.node(j).router);
    CHECK(s1.node(j).router->edges() == 5 - j);
    CHECK(s1.node(j).router->channels() == 16);
  }

  SUBCASE("modes own distinct parameter sets") {
    std::map<ConnectivityMode, std::set<ParamGroup>> groups;
    std::map<ConnectivityMode, std::vector<Parameter<float>>> params;
    for (auto mode : {ConnectivityMode::baseline, ConnectivityMode::static_alpha, ConnectivityMode::dynamic}) {
      c.mode = mode;
      params[mode] = Network<float>(c, 1).parameters();
      for (const auto& p : params[mode]) groups[mode].insert(p.group);
    }
    CHECK(groups[ConnectivityMode::baseline] == std::set<ParamGroup>{ParamGroup::network});
    CHECK(groups[ConnectivityMode::static_alpha] == std::set<ParamGroup>{ParamGroup::network, ParamGroup::alpha});
    CHECK(groups[ConnectivityMode::dynamic] == std::set<ParamGroup>{ParamGroup::network, ParamGroup::router});
    // Network weights are identical across modes for the same seed.
    const auto& base = params[ConnectivityMode::baseline];
    const auto& dyn = params[ConnectivityMode::dynamic];
    std::map<std::string, Tensor<float>> dyn_by_name;
    for (const auto& p : dyn) dyn_by_name.emplace(p.name, p.tensor);
    for (const auto& p : base) {
      REQUIRE(dyn_by_name.count(p.name) == 1);
      const auto& other = dyn_by_name.at(p.name);
      CHECK(std::equal(p.tensor.data().begin(), p.tensor.data().end(), other.data().begin()));
    }
    for (const auto& p : params[ConnectivityMode::static_alpha]) {
      if (p.group == ParamGroup::alpha) {
        CHECK(p.tensor.item() == 0.5f);
        CHECK_FALSE(p.decay);
      }
    }
    for (const auto& p : dyn) {
      if (p.group == ParamGroup::router && p.name.find("bias") != std::string::npos) CHECK_FALSE(p.decay);
    }
  }
  SUBCASE("bad configs") {
    c.stages = {{1, 8, 1}};
    CHECK_THROWS(Network<float>(c, 1));
    c.stages = {{4, 0, 1}};
    CHECK_THROWS(Network<float>(c, 1));
  }
}

TEST_CASE("static forward") {
  std::mt19937_64 rng(31);
  SUBCASE("chain equals sequential composition") {
    auto c = fixture::single_stage(4, 6, 3, 3, ConnectivityMode::baseline, PatternKind::vgg);
    Network<double> net(c, 2);
    fixture::perturb(net, rng);
    const auto x = randn<double>(Shape{2, 3, 6, 6}, rng);
    Tape<double> tape(false);
    const auto logits = net.forward(tape, x);
    Tensor<double> h = x;
    for (std::size_t j = 1; j <= 4; ++j) h = node_transform(tape, net.stages()[0].node(j), h);
    const auto ref = net.head(tape, h);
    CHECK(fixture::max_abs_diff(logits, ref) == 0.0);
  }
  SUBCASE("random fixed weights match the recursive evaluator") {
    auto c = fixture::single_stage(4, 5, 2, 3, ConnectivityMode::baseline);
    Network<double> net(c, 3);
    fixture::perturb(net, rng);
    StaticWiring<double> wiring{StageGraph::complete(4), {}};
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::map<Edge, double> values;
    for (const Edge& e : wiring.graph.edges()) {
      values[e] = unit(rng);
      wiring.weights.emplace(e, Tensor<double>(Shape{1, 1}, values[e]));
    }
    const auto x = randn<double>(Shape{3, 2, 5, 5}, rng);
    Tape<double> tape(false);
    const auto logits = static_forward<double>(tape, net, x, std::span(&wiring, 1));
    oracle::RecursiveEvaluator<double> eval(net, [&](std::size_t, std::size_t i, std::size_t j, const oracle::Image&) {
      return values.at(Edge{i, j});
    });
    for (std::size_t b = 0; b < 3; ++b) {
      const auto ref = eval.logits(oracle::sample_image(x, b));
      for (std::size_t k = 0; k < 3; ++k) CHECK(logits.data()[b * 3 + k] == doctest::Approx(ref[k]).epsilon(1e-10));
    }
  }
  SUBCASE("res, dense and complete coincide on one interior node") {
    auto c = fixture::single_stage(3, 4, 2, 3, ConnectivityMode::baseline);
    Network<float> net(c, 4);
    const auto x = randn<float>(Shape{2, 2, 5, 5}, rng);
    Tape<float> tape(false);
    std::vector<Tensor<float>> outs;
    for (auto kind : {PatternKind::res, PatternKind::dense, PatternKind::complete}) {
      const auto w = uniform_wiring<float>(pattern_edges(WiringPattern{kind}, 3), 1.0f);
      outs.push_back(static_forward<float>(tape, net, x, std::span(&w, 1)));
    }
    CHECK(fixture::max_abs_diff(outs[0], outs[1]) == 0.0);
    CHECK(fixture::max_abs_diff(outs[0], outs[2]) == 0.0);
  }
  SUBCASE("missing edge weight") {
    auto c = fixture::single_stage(3, 4, 2, 3, ConnectivityMode::baseline);
    Network<float> net(c, 4);
    StaticWiring<float> w = uniform_wiring<float>(StageGraph::complete(3), 1.0f);
    w.weights.erase(Edge{1, 3});
    Tape<float> tape(false);
    CHECK_THROWS_WITH_AS(static_forward<float>(tape, net, Tensor<float>(Shape{1, 2, 4, 4}), std::span(&w, 1)),
                         doctest::Contains("missing weight"), std::invalid_argument);
  }
}

TEST_CASE("dynamic forward") {
  std::mt19937_64 rng(32);
  SUBCASE("forced routers reduce to static patterns") {
    for (auto kind : {PatternKind::vgg, PatternKind::res, PatternKind::dense, PatternKind::complete}) {
      ModelConfig c;
      c.in_channels = 3;
      c.classes = 5;
      c.stages = {{5, 8, 1}, {4, 12, 2}};
      Network<float> net(c, 5);
      fixture::perturb(net, rng);
      const auto wiring = fixture::pattern_wiring(net, kind);
      fixture::force_routers(net, wiring);
      const auto x = randn<float>(Shape{3, 3, 8, 8}, rng);
      Tape<float> tape(false);
      const auto dyn = dynamic_forward(tape, net, x).logits;
      const auto stat = static_forward<float>(tape, net, x, wiring);
      INFO(to_string(kind));
      CHECK(fixture::max_abs_diff(dyn, stat) <= 1e-5);
    }
  }
  SUBCASE("recursive oracle on complete graphs") {
    for (std::size_t n : {3, 4, 5}) {
      for (int draw = 0; draw < 5; ++draw) {
        auto c = fixture::single_stage(n, 4, 2, 3);
        Network<double> net(c, 100 + draw);
        fixture::perturb(net, rng);
        CHECK(fixture::recursive_deviation(net, randn<double>(Shape{2, 2, 6, 6}, rng)) <= 1e-10);
      }
    }
  }
  SUBCASE("identical samples and per-sample independence") {
    ModelConfig c;
    c.in_channels = 2;
    c.classes = 3;
    c.stages = {{4, 6, 1}, {4, 8, 2}};
    Network<float> net(c, 6);
    fixture::perturb(net, rng);
    auto x = randn<float>(Shape{3, 2, 8, 8}, rng);
    const std::size_t per = 2 * 8 * 8;
    std::copy_n(x.data().begin(), per, x.mutable_data().begin() + per);  // sample 1 = sample 0
    Tape<float> tape(false);
    const auto r = dynamic_forward(tape, net, x);
    for (std::size_t k = 0; k < 3; ++k) CHECK(r.logits.data()[k] == r.logits.data()[3 + k]);
    for (const auto& buf : r.buffers) CHECK(buf.snapshot(0).values == buf.snapshot(1).values);

    auto y = Tensor<float>(x.shape(), std::vector<float>(x.data().begin(), x.data().end()));
    for (std::size_t i = 0; i < per; ++i) y.mutable_data()[2 * per + i] += 1.0f;
    const auto r2 = dynamic_forward(tape, net, y);
    for (std::size_t k = 0; k < 6; ++k) CHECK(r2.logits.data()[k] == r.logits.data()[k]);
    CHECK(r2.logits.data()[6] != r.logits.data()[6]);
  }
  SUBCASE("gradients reach network and router parameters") {
    ModelConfig c;
    c.in_channels = 3;
    c.classes = 4;
    c.stages = {{5, 8, 1}, {5, 8, 2}};
    Network<float> net(c, 7);
    const auto x = randn<float>(Shape{4, 3, 8, 8}, rng);
    const std::vector<int> labels{0, 1, 2, 3};
    Tape<float> tape;
    tape.backward(ops::cross_entropy_smoothed(tape, net.forward(tape, x), labels, 0.1));
    std::size_t router_total = 0, router_zero = 0;
    for (const auto& p : net.parameters()) {
      REQUIRE(p.tensor.has_grad());
      if (p.group != ParamGroup::router) continue;
      for (float g : p.tensor.grad()) {
        ++router_total;
        router_zero += g == 0.0f;
      }
    }
    CHECK(router_total > 0);
    CHECK(static_cast<double>(router_zero) / static_cast<double>(router_total) < 0.01);
  }
  SUBCASE("finite differences on a 3-node model") {
    auto c = fixture::single_stage(3, 4, 2, 3);
    Network<double> net(c, 8);
    fixture::perturb(net, rng, 0.5);
    std::size_t checked = 0;
    CHECK(fixture::model_gradcheck(net, randn<double>(Shape{2, 2, 5, 5}, rng), {0, 2}, &checked) < 1e-4);
    CHECK(checked > 100);
  }
  SUBCASE("group-normalized nodes") {
    auto c = fixture::single_stage(4, 4, 2, 3);
    c.norm_groups = 2;
    Network<double> net(c, 9);
    fixture::perturb(net, rng, 0.5);
    std::size_t norm_params = 0, kernels = 0;
    for (const auto& p : net.parameters()) {
      norm_params += p.name.find(".norm.") != std::string::npos;
      kernels += p.name.ends_with(".kernel");
    }
    CHECK(kernels > 0);
    CHECK(norm_params == 2 * kernels);
    CHECK(fixture::recursive_deviation(net, randn<double>(Shape{2, 2, 6, 6}, rng)) <= 1e-10);
    std::size_t checked = 0;
    CHECK(fixture::model_gradcheck(net, randn<double>(Shape{2, 2, 5, 5}, rng), {1, 2}, &checked) < 1e-4);
    CHECK(checked > 100);
    c.norm_groups = 3;
    CHECK_THROWS(Network<double>(c, 9));
  }
}

TEST_CASE("buffers during forward passes") {
  std::mt19937_64 rng(33);
  auto c = fixture::single_stage(5, 4, 2, 3);
  Network<float> net(c, 9);
  fixture::perturb(net, rng);
  const auto x = randn<float>(Shape{4, 2, 6, 6}, rng);
  Tape<float> tape(false);
  const auto r = dynamic_forward(tape, net, x);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  std::vector<Tensor<float>> parts;
  for (std::size_t b : perm) parts.push_back(batch_slice(x, b));
  const auto rp = dynamic_forward(tape, net, batch_concat<float>(parts));
  for (std::size_t b = 0; b < 4; ++b) {
    CHECK(r.buffers[0].snapshot(b).strictly_lower_triangular());
    CHECK(rp.buffers[0].snapshot(b).values == r.buffers[0].snapshot(perm[b]).values);
  }
  CHECK(r.buffers[0].snapshot(0).values != r.buffers[0].snapshot(1).values);
}

TEST_CASE("pruned inference") {
  std::mt19937_64 rng(34);
  SUBCASE("tau zero closes nothing") {
    const auto g = StageGraph::complete(5);
    AdjacencySnapshot snap{5, std::vector<double>(25, 0.0)};
    std::uniform_real_distribution<double> unit(0.01, 0.99);
    for (const Edge& e : g.edges()) snap.weight(e.from, e.to) = unit(rng);
    const auto p = prune_for_inference(g, snap, ThresholdPolicy{ThresholdMode::fixed, 0.0, {}});
    CHECK(p.active_edges == g.edges());
    CHECK(std::all_of(p.live.begin() + 1, p.live.end(), [](bool v) { return v; }));
    CHECK(p.repaired.empty());
  }
  SUBCASE("closed inputs kill an interior node") {
    const auto g = StageGraph::complete(4);
    AdjacencySnapshot snap{4, std::vector<double>(16, 0.0)};
    for (const Edge& e : g.edges()) snap.weight(e.from, e.to) = 0.9;
    snap.weight(1, 3) = 0.1;
    snap.weight(2, 3) = 0.2;
    const auto p = prune_for_inference(g, snap, ThresholdPolicy{ThresholdMode::fixed, 0.5, {}});
    CHECK_FALSE(p.node_live(3));
    CHECK(p.node_live(2));
    CHECK(p.active_edges == std::vector<Edge>{{1, 2}, {1, 4}, {2, 4}});
  }
  SUBCASE("repair prefers a reachable source") {
    const auto g = StageGraph::complete(4);
    AdjacencySnapshot snap{4, std::vector<double>(16, 0.0)};
    for (const Edge& e : g.edges()) snap.weight(e.from, e.to) = 0.1;
    snap.weight(3, 4) = 0.3;
    const auto p = prune_for_inference(g, snap, ThresholdPolicy{ThresholdMode::fixed, 0.5, {}});
    CHECK(p.repaired == std::vector<Edge>{{1, 4}});
    CHECK(p.active_edges == std::vector<Edge>{{1, 4}});
  }
  SUBCASE("repair recurses through unreachable sources") {
    const StageGraph g(4, {{1, 2}, {1, 3}, {2, 3}, {2, 4}, {3, 4}});
    AdjacencySnapshot snap{4, std::vector<double>(16, 0.0)};
    snap.weight(1, 2) = 0.1;
    snap.weight(1, 3) = 0.2;
    snap.weight(2, 3) = 0.25;
    snap.weight(2, 4) = 0.1;
    snap.weight(3, 4) = 0.3;
    const auto p = prune_for_inference(g, snap, ThresholdPolicy{ThresholdMode::fixed, 0.5, {}});
    CHECK(p.repaired == std::vector<Edge>{{1, 3}, {3, 4}});
    CHECK(oracle::reaches_output(4, p.active_edges));
    CHECK_FALSE(p.node_live(2));
  }
  SUBCASE("surviving edges match a cascade count") {
    std::size_t compared = 0;
    for (int trial = 0; trial < 40; ++trial) {
      ModelConfig c;
      c.in_channels = 2;
      c.classes = 3;
      c.stages = {{6, 4, 1}, {5, 4, 2}};
      Network<float> net(c, 200 + trial);
      fixture::perturb(net, rng, 3.0);
      const auto x = randn<float>(Shape{3, 2, 6, 6}, rng);
      Tape<float> tape(false);
      const auto soft = dynamic_forward(tape, net, x);
      for (std::size_t s = 0; s < 2; ++s) {
        for (std::size_t b = 0; b < 3; ++b) {
          const auto& g = net.stages()[s].graph;
          const auto snap = soft.buffers[s].snapshot(b);
          const auto p = prune_for_inference(g, snap, ThresholdPolicy{ThresholdMode::fixed, 0.5, {}});
          CHECK(oracle::reaches_output(g.node_count(), p.active_edges));
          if (p.repaired.empty()) {
            CHECK(p.active_edges.size() == oracle::cascade_prune(g, snap, 0.5).size());
            ++compared;
          }
        }
      }
    }
    CHECK(compared > 20);
  }
  SUBCASE("masked and skipped execution agree") {
    for (int trial = 0; trial < 10; ++trial) {
      ModelConfig c;
      c.in_channels = 2;
      c.classes = 3;
      c.stages = {{5, 4, 1}, {5, 6, 2}};
      Network<float> net(c, 300 + trial);
      fixture::perturb(net, rng, 2.0);
      const auto x = randn<float>(Shape{3, 2, 8, 8}, rng);
      const ThresholdPolicy policy{ThresholdMode::fixed, 0.1 + 0.08 * trial, {}};
      const auto skip = pruned_forward(net, x, policy, PrunedExecution::skip);
      const auto masked = pruned_forward(net, x, policy, PrunedExecution::masked);
      CHECK(fixture::max_abs_diff(skip.logits, masked.logits) <= 1e-6);
    }
  }
  SUBCASE("pruning off equals the soft pass") {
    ModelConfig c;
    c.in_channels = 2;
    c.classes = 3;
    c.stages = {{4, 4, 1}};
    Network<float> net(c, 11);
    const auto x = randn<float>(Shape{2, 2, 6, 6}, rng);
    Tape<float> tape(false);
    const auto soft = dynamic_forward(tape, net, x).logits;
    const auto pruned = pruned_forward(net, x, ThresholdPolicy{}, PrunedExecution::masked).logits;
    CHECK(fixture::max_abs_diff(soft, pruned) <= 1e-6);
  }
}

TEST_CASE("cost accounting") {
  SUBCASE("single 3x3 convolution") {
    auto c = fixture::single_stage(2, 16, 16, 10, ConnectivityMode::baseline, PatternKind::vgg);
    const Network<float> net(c, 1);
    const auto report = count_cost(net, Shape{16, 8, 8});
    REQUIRE(report.layers.size() == 2);
    CHECK(report.layers[0].multiadds == 147456);
    CHECK(report.multiadds_router == 0);
    CHECK(report.router_share == 0.0);
    CHECK(report.multiadds_total == 147456 + 16 * 10);
    CHECK(report.params == 16 * 16 * 9 + 16 + 16 * 10 + 10);
  }
  SUBCASE("router term") {
    auto c = fixture::single_stage(4, 8, 3, 2);
    const Network<float> net(c, 1);
    const auto report = count_cost(net, Shape{3, 8, 8});
    CHECK(report.multiadds_router == 8 * 3 + 8 * 2 + 8 * 1);
    CHECK(report.router_share > 0.0);
    const std::string text = report.to_text();
    for (const char* key : {"params:", "multiadds_total:", "multiadds_router:", "router_share:"}) {
      CHECK(text.find(key) != std::string::npos);
    }
    CHECK_THROWS(count_cost(net, Shape{4, 8, 8}));
  }
}
