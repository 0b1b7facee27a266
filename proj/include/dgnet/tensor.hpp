// Copyright 2026 The DGNet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors and the reverse-mode tape that records operations
// on them.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dgnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename T>
struct TensorStorage {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until the first accumulation
  bool requires_grad = false;
};

/// Shared handle to a dense tensor. Copies alias the same storage; use
/// `detach()` for an independent value copy.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false);
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(storage_); }
  const Shape& shape() const { return storage_->shape; }
  std::size_t rank() const { return storage_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return storage_->data.size(); }

  std::span<const T> data() const { return storage_->data; }
  std::span<T> mutable_data() { return storage_->data; }
  T item() const;

  bool requires_grad() const { return storage_->requires_grad; }
  void set_requires_grad(bool flag) { storage_->requires_grad = flag; }

  bool has_grad() const { return !storage_->grad.empty(); }
  std::span<const T> grad() const { return storage_->grad; }
  /// Gradient accumulator, allocated (zero-filled) on first access.
  std::span<T> grad_accumulator() const;
  void zero_grad() const;
  void clear_grad() const { storage_->grad.clear(); }

  Tensor detach() const;
  bool same_storage(const Tensor& other) const { return storage_ == other.storage_; }

 private:
  std::shared_ptr<TensorStorage<T>> storage_;
};

/// Ordered record of differentiable operations. Each entry owns the closure
/// that propagates its output gradient into its inputs; `backward` replays
/// the entries strictly in reverse recording order.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  struct Entry {
    std::string op;
    Tensor<T> output;
    BackwardFn backward;
  };

  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  void set_recording(bool flag) { recording_ = flag; }

  void record(std::string op, Tensor<T> output, BackwardFn backward);

  /// Seeds d(root)/d(root) = 1 and replays the tape in reverse. Leaf
  /// gradients accumulate across calls; intermediate gradients are reset at
  /// the start of each call so repeated replays are idempotent.
  void backward(Tensor<T> root);

  /// Operation names in the order they were replayed by the last backward.
  const std::vector<std::string>& last_replay() const { return last_replay_; }

  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  void clear();

 private:
  bool recording_;
  std::vector<Entry> entries_;
  std::vector<std::string> last_replay_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace dgnet
