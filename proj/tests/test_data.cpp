// Copyright 2026 The DGNet Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "dgnet/data.hpp"
#include "dgnet/train.hpp"

using namespace dgnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "dgnet_test_data";
  fs::create_directories(dir);
  return dir / name;
}

struct Record {
  std::uint8_t label;
  std::vector<std::uint8_t> pixels;  // 3072 bytes, planar RGB
};

Record random_record(std::uint8_t label, std::mt19937_64& rng) {
  Record r{label, std::vector<std::uint8_t>(3072)};
  std::uniform_int_distribution<int> byte(0, 255);
  for (auto& p : r.pixels) p = static_cast<std::uint8_t>(byte(rng));
  return r;
}

void write_records(const fs::path& path, const std::vector<Record>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  for (const auto& r : records) {
    out.put(static_cast<char>(r.label));
    out.write(reinterpret_cast<const char*>(r.pixels.data()), static_cast<std::streamsize>(r.pixels.size()));
  }
}

float expected_pixel(const Record& r, std::size_t c, std::size_t i) {
  const float mean[3] = {0.4914f, 0.4822f, 0.4465f};
  const float std[3] = {0.2470f, 0.2435f, 0.2616f};
  return (static_cast<float>(r.pixels[c * 1024 + i]) / 255.0f - mean[c]) / std[c];
}

}  // namespace

TEST_CASE("cifar binary records") {
  std::mt19937_64 rng(51);
  const std::vector<Record> records{random_record(9, rng), random_record(0, rng)};
  const auto path = scratch("two.bin");
  write_records(path, records);

  const auto d = load_cifar_binary(path);
  CHECK(d.size() == 2);
  CHECK(d.images.shape() == Shape{2, 3, 32, 32});
  CHECK(d.labels == std::vector<int>{9, 0});
  CHECK(d.classes == 10);
  for (std::size_t m = 0; m < 2; ++m) {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < 1024; ++i) {
        CHECK(d.images.data()[(m * 3 + c) * 1024 + i] == doctest::Approx(expected_pixel(records[m], c, i)).epsilon(1e-6));
      }
    }
  }

  SUBCASE("record limit and multiple files") {
    CHECK(load_cifar_binary(path, 1).labels == std::vector<int>{9});
    const std::vector<fs::path> both{path, path};
    const auto d2 = load_cifar_binary(both);
    CHECK(d2.labels == std::vector<int>{9, 0, 9, 0});
    CHECK(load_cifar_binary(both, 3).size() == 3);
  }
  SUBCASE("malformed files") {
    const auto cut = scratch("cut.bin");
    write_records(cut, records);
    fs::resize_file(cut, 3073 + 100);
    CHECK_THROWS_WITH(load_cifar_binary(cut), doctest::Contains("truncated"));
    const auto bad_label = scratch("label.bin");
    write_records(bad_label, {random_record(10, rng)});
    CHECK_THROWS_WITH(load_cifar_binary(bad_label), doctest::Contains("label byte 10"));
    CHECK_THROWS(load_cifar_binary(scratch("absent.bin")));
  }
}

TEST_CASE("synthetic gratings") {
  SynthSpec spec;
  spec.classes = 3;
  spec.per_class = 10;
  spec.image_size = 8;
  spec.seed = 4;
  const auto a = synth_dataset(spec);
  const auto b = synth_dataset(spec);
  CHECK(a.images.shape() == Shape{30, 3, 8, 8});
  CHECK(a.classes == 3);
  CHECK(std::equal(a.images.data().begin(), a.images.data().end(), b.images.data().begin()));
  CHECK(a.labels == b.labels);
  for (int k = 0; k < 3; ++k) CHECK(std::count(a.labels.begin(), a.labels.end(), k) == 10);

  spec.seed = 5;
  const auto other = synth_dataset(spec);
  CHECK_FALSE(std::equal(a.images.data().begin(), a.images.data().end(), other.images.data().begin()));

  SUBCASE("zero noise makes classes constant") {
    spec.noise = 0.0;
    spec.bands = 1;
    const auto d = synth_dataset(spec);
    const std::size_t per = 3 * 8 * 8;
    std::map<int, std::vector<float>> first;
    for (std::size_t m = 0; m < d.size(); ++m) {
      std::vector<float> img(d.images.data().begin() + m * per, d.images.data().begin() + (m + 1) * per);
      auto [it, fresh] = first.emplace(d.labels[m], img);
      if (!fresh) CHECK(it->second == img);
    }
    CHECK(first.size() == 3);
    CHECK(first[0] != first[1]);
  }
  SUBCASE("bad specs") {
    spec.classes = 1;
    CHECK_THROWS(synth_dataset(spec));
    spec.classes = 2;
    spec.per_class = 0;
    CHECK_THROWS(synth_dataset(spec));
  }
}

TEST_CASE("class tint shifts channel means") {
  SynthSpec spec;
  spec.classes = 2;
  spec.per_class = 3;
  spec.image_size = 16;  // whole cycles, so the gratings average to zero
  spec.noise = 0.0;
  spec.bands = 1;
  const std::size_t plane = 16 * 16;
  auto channel_mean = [&](const Dataset& d, std::size_t m, std::size_t c) {
    double sum = 0.0;
    for (std::size_t i = 0; i < plane; ++i) sum += d.images.data()[(m * 3 + c) * plane + i];
    return sum / static_cast<double>(plane);
  };
  const auto plain = synth_dataset(spec);
  for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(channel_mean(plain, 0, c)) < 1e-5);

  spec.tint = 0.4;
  const auto tinted = synth_dataset(spec);
  for (std::size_t c = 0; c < 3; ++c) {
    // class 0 carries cos(2*pi*c/3); class 1 the opposite sign
    const double expected = std::cos(2.0 * 3.141592653589793 * static_cast<double>(c) / 3.0);
    REQUIRE(tinted.labels[0] == 0);
    REQUIRE(tinted.labels[1] == 1);
    CHECK(channel_mean(tinted, 0, c) * expected > 0.0);
    CHECK(channel_mean(tinted, 1, c) == doctest::Approx(-channel_mean(tinted, 0, c)).epsilon(1e-4));
  }
}

TEST_CASE("split") {
  SynthSpec spec;
  spec.classes = 2;
  spec.per_class = 20;
  spec.image_size = 4;
  const auto d = synth_dataset(spec);
  const auto s = split_dataset(d, 0.25, 3);
  CHECK(s.eval.size() == 10);
  CHECK(s.train.size() == 30);
  const auto again = split_dataset(d, 0.25, 3);
  CHECK(again.eval.labels == s.eval.labels);
  CHECK(std::equal(again.eval.images.data().begin(), again.eval.images.data().end(), s.eval.images.data().begin()));
  // Disjoint: every image appears once across both halves.
  const std::size_t per = 3 * 4 * 4;
  std::multiset<std::vector<float>> seen;
  for (const Dataset* part : {&s.train, &s.eval}) {
    for (std::size_t m = 0; m < part->size(); ++m) {
      seen.emplace(part->images.data().begin() + m * per, part->images.data().begin() + (m + 1) * per);
    }
  }
  for (const auto& img : seen) CHECK(seen.count(img) == 1);
  CHECK_THROWS(split_dataset(d, 1.0, 0));
}

TEST_CASE("two-class gratings are learnable by a small static network") {
  SynthSpec spec;
  spec.classes = 2;
  spec.per_class = 200;
  spec.image_size = 12;
  spec.noise = 0.5;
  spec.seed = 6;
  const auto data = split_dataset(synth_dataset(spec), 0.25, 0);
  ModelConfig model;
  model.in_channels = 3;
  model.classes = 2;
  model.stages = {{3, 8, 1}, {3, 16, 2}};
  model.pattern.kind = PatternKind::res;
  model.mode = ConnectivityMode::baseline;
  TrainConfig train;
  train.epochs = 6;
  train.batch_size = 32;
  train.lr = 0.02;
  train.warmup_epochs = 1.0;
  TrainState<float> state(Network<float>(model, 0));
  const auto result = run_training(state, train, data);
  CHECK(result.eval_accuracy > 0.9);
}
