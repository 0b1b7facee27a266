// Copyright 2026 The DGNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "dgnet/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace dgnet {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t extent : shape) n *= extent;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one axis");
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == 0) {
      throw ShapeError("tensor extent at axis " + std::to_string(i) + " must be positive");
    }
  }
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill, bool requires_grad)
    : storage_(std::make_shared<TensorStorage<T>>()) {
  check_shape(shape);
  storage_->data.assign(shape_numel(shape), fill);
  storage_->shape = std::move(shape);
  storage_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad)
    : storage_(std::make_shared<TensorStorage<T>>()) {
  check_shape(shape);
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("shape " + shape_string(shape) + " holds " +
                     std::to_string(shape_numel(shape)) + " elements, got " +
                     std::to_string(data.size()));
  }
  storage_->shape = std::move(shape);
  storage_->data = std::move(data);
  storage_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_string(shape()));
  }
  return storage_->shape[axis];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() requires a single-element tensor, got " +
                                     shape_string(shape()));
  return storage_->data[0];
}

template <typename T>
std::span<T> Tensor<T>::grad_accumulator() const {
  if (storage_->grad.empty()) storage_->grad.assign(storage_->data.size(), T(0));
  return storage_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() const {
  std::fill(storage_->grad.begin(), storage_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(storage_->shape, storage_->data, false);
}

template <typename T>
void Tape<T>::record(std::string op, Tensor<T> output, BackwardFn backward) {
  if (!recording_) return;
  entries_.push_back(Entry{std::move(op), std::move(output), std::move(backward)});
}

template <typename T>
void Tape<T>::backward(Tensor<T> root) {
  if (!root.defined() || root.numel() != 1) {
    throw ShapeError("backward requires a scalar root");
  }
  for (auto& entry : entries_) entry.output.clear_grad();
  last_replay_.clear();

  root.grad_accumulator()[0] += T(1);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    last_replay_.push_back(it->op);
    if (!it->output.has_grad()) continue;  // not on a path from the root
    it->backward();
  }
}

template <typename T>
void Tape<T>::clear() {
  entries_.clear();
  last_replay_.clear();
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace dgnet
