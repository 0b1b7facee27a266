// Copyright 2026 The DGNet Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "dgnet/buffer.hpp"
#include "dgnet/ops.hpp"

using namespace dgnet;

namespace {

using Targets = std::vector<std::size_t>;

Tensor<float> weights(std::size_t batch, std::vector<float> values, bool grad = false) {
  const std::size_t cols = values.size() / batch;
  return Tensor<float>(Shape{batch, cols}, std::move(values), grad);
}

}  // namespace

TEST_CASE("new buffers are zero") {
  AdjacencyBuffer<float> a(4, 6);
  CHECK(a.values().shape() == Shape{4, 6, 6});
  double total = 0.0;
  for (float v : a.values().data()) total += v;
  CHECK(total == 0.0);
  AdjacencyBuffer<float> b(1, 2);
  CHECK(b.values().numel() == 4);
  CHECK_FALSE(b.filled(1, 2));
}

TEST_CASE("write and read") {
  AdjacencyBuffer<float> buf(2, 3);
  Tape<float> tape;
  buf.write_outgoing(1, weights(2, {0.1f, 0.2f, 0.3f, 0.4f}), Targets{2, 3});
  buf.write_outgoing(2, weights(2, {0.8f, 0.6f}), Targets{3});
  CHECK(buf.values().data()[(0 * 3 + 2) * 3 + 1] == 0.8f);  // [b=0, j=3, i=2]
  CHECK(buf.values().data()[(1 * 3 + 2) * 3 + 1] == 0.6f);
  CHECK(buf.filled(2, 3));

  const auto row = buf.read_incoming(tape, 3, Targets{1, 2});
  CHECK(row.shape() == Shape{2, 2});
  CHECK(row.data()[0] == 0.2f);
  CHECK(row.data()[1] == 0.8f);
  CHECK(row.data()[3] == 0.6f);

  const auto snap = buf.snapshot(0);
  CHECK(snap.weight(2, 3) == doctest::Approx(0.8));
  CHECK(snap.weight(1, 2) == doctest::Approx(0.1));
  CHECK(snap.strictly_lower_triangular());

  SUBCASE("empty target list is a no-op") {
    AdjacencyBuffer<float> other(2, 3);
    other.write_outgoing(1, Tensor<float>(Shape{2, 1}), Targets{});
    for (float v : other.values().data()) CHECK(v == 0.0f);
  }
}

TEST_CASE("protocol errors") {
  AdjacencyBuffer<float> buf(1, 4);
  Tape<float> tape;
  CHECK_THROWS_AS(buf.write_outgoing(2, weights(1, {0.5f}), Targets{1}), BufferProtocolError);
  CHECK_THROWS_AS(buf.write_outgoing(2, weights(1, {0.5f}), Targets{2}), BufferProtocolError);
  CHECK_THROWS_AS(buf.read_incoming(tape, 3, Targets{1}), BufferProtocolError);
  buf.write_outgoing(1, weights(1, {0.5f, 0.5f}), Targets{2, 3});
  CHECK_THROWS_AS(buf.write_outgoing(1, weights(1, {0.5f}), Targets{3}), BufferProtocolError);
  CHECK_THROWS(buf.write_outgoing(2, weights(1, {0.5f, 0.5f}), Targets{3}));

  const auto empty = buf.read_incoming(tape, 4);
  CHECK(empty.shape() == Shape{1, 3});
  for (float v : empty.data()) CHECK(v == 0.0f);
}

TEST_CASE("gradients reach the writer through the buffer") {
  AdjacencyBuffer<double> buf(2, 3);
  Tape<double> tape;
  Tensor<double> w1(Shape{2, 2}, std::vector<double>{0.1, 0.2, 0.3, 0.4}, true);
  Tensor<double> w2(Shape{2, 1}, std::vector<double>{0.5, 0.6}, true);
  buf.write_outgoing(1, w1, Targets{2, 3});
  buf.write_outgoing(2, w2, Targets{3});
  const auto row = buf.read_incoming(tape, 3, Targets{1, 2});
  // loss = sum_b (2*w13 + 3*w23)
  Tensor<double> coef(Shape{2, 1}, std::vector<double>{2.0, 3.0});
  auto loss = ops::sum(tape, ops::fully_connected(tape, row, coef, Tensor<double>(Shape{1}, 0.0)));
  tape.backward(loss);
  CHECK(w1.grad()[0] == 0.0);
  CHECK(w1.grad()[1] == 2.0);
  CHECK(w1.grad()[3] == 2.0);
  CHECK(w2.grad()[0] == 3.0);
  CHECK(w2.grad()[1] == 3.0);

  // Snapshots are plain copies.
  auto snap = buf.snapshot(1);
  snap.weight(2, 3) = 9.0;
  CHECK(buf.snapshot(1).weight(2, 3) == 0.6);
  CHECK(buf.snapshot(0).weight(2, 3) == 0.5);
}
