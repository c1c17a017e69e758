// Copyright 2026 The CoFormer-GSR Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Dense n-dimensional tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a shared handle onto a node holding shape, values and (once
// backpropagated) gradients. Operations executed while a Tape is active and
// having at least one input that requires gradients are recorded on that
// tape; Tape::backward replays the record in reverse. With no active tape
// every operation is a plain forward computation, which is how frozen
// weights are evaluated concurrently.
//
// Broadcasting is limited to the leading extent: a binary elementwise op
// accepts equal shapes, or one operand whose shape equals the other's with
// its first extent removed (bias rows, per-position vectors).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "coformer/rng.hpp"

namespace coformer {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <class T>
class Tape;

namespace detail {

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  // Producing tape and its generation; null/0 for leaves.
  const Tape<T>* tape = nullptr;
  std::uint64_t generation = 0;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
  }
};

}  // namespace detail

template <class T>
class Tensor {
 public:
  using Scalar = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);
  static Tensor from_node(NodePtr node);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const T> values() const;
  // Direct write access; only meaningful for leaves (parameters, inputs).
  std::span<T> mutable_values();
  T item() const;
  T at(std::size_t i) const;
  T at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const T> grad() const;
  std::span<T> mutable_grad();
  void zero_grad();
  void clear_grad();

  // New leaf with a copy of the values and no gradient history.
  Tensor detach() const;
  // Deep copy that keeps requires_grad.
  Tensor clone() const;

  const NodePtr& node() const { return node_; }

 private:
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}
  NodePtr node_;
};

// Ordered record of executed primitives. Owns the RNG every stochastic op
// draws from, so a training run is reproducible from (seed, counter).
template <class T>
class Tape {
 public:
  explicit Tape(std::uint64_t seed = 0) : rng_(seed) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  // Populates gradients of every requires_grad tensor reachable from the
  // scalar `loss`. A second call needs reset() first.
  void backward(const Tensor<T>& loss);
  // Drops the record (and the memory it keeps alive); keeps the RNG.
  void reset();

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }
  std::uint64_t generation() const { return generation_; }
  Rng& rng() { return rng_; }
  void set_rng(Rng rng) { rng_ = rng; }

  void record(std::shared_ptr<detail::Node<T>> output, std::function<void()> backward_fn);

  static Tape* active();

 private:
  template <class U>
  friend class ActiveTape;

  struct Entry {
    std::shared_ptr<detail::Node<T>> output;
    std::function<void()> backward;
  };

  std::vector<Entry> entries_;
  Rng rng_;
  std::uint64_t generation_ = 1;
  bool consumed_ = false;

  static thread_local Tape* active_;
};

// Makes `tape` the recording target for the current thread until
// destruction. Passing nullptr suspends recording.
template <class T>
class ActiveTape {
 public:
  explicit ActiveTape(Tape<T>* tape);
  explicit ActiveTape(Tape<T>& tape) : ActiveTape(&tape) {}
  ActiveTape(const ActiveTape&) = delete;
  ActiveTape& operator=(const ActiveTape&) = delete;
  ~ActiveTape();

 private:
  Tape<T>* previous_;
};

template <class T>
class NoGrad : public ActiveTape<T> {
 public:
  NoGrad() : ActiveTape<T>(nullptr) {}
};

// ---- primitives -----------------------------------------------------------

template <class T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> transpose(const Tensor<T>& a);

template <class T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> minimum(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> maximum(const Tensor<T>& a, const Tensor<T>& b);

template <class T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <class T> Tensor<T> add_scalar(const Tensor<T>& a, T offset);
template <class T> Tensor<T> neg(const Tensor<T>& a);
template <class T> Tensor<T> abs(const Tensor<T>& a);
template <class T> Tensor<T> exp(const Tensor<T>& a);
template <class T> Tensor<T> log(const Tensor<T>& a);
template <class T> Tensor<T> relu(const Tensor<T>& a);
template <class T> Tensor<T> sigmoid(const Tensor<T>& a);
// Gradient passes only where lo <= a <= hi.
template <class T> Tensor<T> clamp(const Tensor<T>& a, T lo, T hi);

// Shift-stabilized; `axis` may be negative (counted from the end).
template <class T> Tensor<T> softmax(const Tensor<T>& a, int axis);
template <class T> Tensor<T> log_softmax(const Tensor<T>& a, int axis);

// Reductions drop the reduced axis.
template <class T> Tensor<T> sum(const Tensor<T>& a, int axis);
template <class T> Tensor<T> mean(const Tensor<T>& a, int axis);
template <class T> Tensor<T> sum_all(const Tensor<T>& a);
template <class T> Tensor<T> mean_all(const Tensor<T>& a);

template <class T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);
template <class T> Tensor<T> slice(const Tensor<T>& a, int axis, std::size_t begin, std::size_t end);
template <class T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);

inline constexpr double kLayerNormEpsilon = 1e-5;

// Normalizes over the last axis, then applies gain and bias (both [D]).
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias);

// Inverted dropout. Identity when !train or rate == 0; otherwise draws the
// mask from `rng`, or from the active tape's RNG when `rng` is null.
// rate must lie in [0, 1).
template <class T> Tensor<T> dropout(const Tensor<T>& x, double rate, bool train, Rng* rng = nullptr);

// Rows of `table` ([N, D]) at `indices`, shape [indices.size(), D].
template <class T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::size_t> indices);

template <class T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <class T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <class T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <class T> Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }
template <class T> Tensor<T> operator-(const Tensor<T>& a) { return neg(a); }

// Value conversion between precisions (no gradient history).
template <class To, class From>
Tensor<To> cast(const Tensor<From>& a) {
  std::vector<To> out(a.values().begin(), a.values().end());
  return Tensor<To>(a.shape(), std::move(out), a.requires_grad());
}

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace coformer
