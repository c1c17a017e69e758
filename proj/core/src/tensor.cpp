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

#include "coformer/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "coformer/error.hpp"

namespace coformer {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// ---- Tensor ---------------------------------------------------------------

template <class T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad) {
  for (std::size_t extent : shape) {
    if (extent == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor of shape " + shape_str(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  node_ = std::make_shared<detail::Node<T>>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

template <class T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::from_node(NodePtr node) {
  return Tensor(std::move(node));
}

template <class T>
const Shape& Tensor<T>::shape() const {
  return node_->shape;
}

template <class T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= rank()) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  return node_->shape[axis];
}

template <class T>
std::size_t Tensor<T>::numel() const {
  return node_->value.size();
}

template <class T>
std::span<const T> Tensor<T>::values() const {
  return node_->value;
}

template <class T>
std::span<T> Tensor<T>::mutable_values() {
  return node_->value;
}

template <class T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

template <class T>
T Tensor<T>::at(std::size_t i) const {
  return node_->value.at(i);
}

template <class T>
T Tensor<T>::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw ShapeError("at(row, col) on tensor of shape " + shape_str(shape()));
  return node_->value.at(row * node_->shape[1] + col);
}

template <class T>
bool Tensor<T>::requires_grad() const {
  return node_->requires_grad;
}

template <class T>
void Tensor<T>::set_requires_grad(bool on) {
  node_->requires_grad = on;
}

template <class T>
bool Tensor<T>::has_grad() const {
  return !node_->grad.empty();
}

template <class T>
std::span<const T> Tensor<T>::grad() const {
  return node_->grad;
}

template <class T>
std::span<T> Tensor<T>::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

template <class T>
void Tensor<T>::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <class T>
void Tensor<T>::clear_grad() {
  node_->grad.clear();
}

template <class T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(node_->shape, node_->value, false);
}

template <class T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor(node_->shape, node_->value, node_->requires_grad);
}

// ---- Tape -----------------------------------------------------------------

template <class T>
thread_local Tape<T>* Tape<T>::active_ = nullptr;

template <class T>
Tape<T>::~Tape() {
  if (active_ == this) active_ = nullptr;
}

template <class T>
Tape<T>* Tape<T>::active() {
  return active_;
}

template <class T>
void Tape<T>::record(std::shared_ptr<detail::Node<T>> output, std::function<void()> backward_fn) {
  output->tape = this;
  output->generation = generation_;
  entries_.push_back(Entry{std::move(output), std::move(backward_fn)});
}

template <class T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined()) throw GraphError("backward: undefined loss tensor");
  if (loss.numel() != 1) {
    throw GraphError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
  }
  if (consumed_) throw GraphError("backward: tape already consumed; call reset() before another backward");
  const auto& node = loss.node();
  if (!node->requires_grad || node->tape != this || node->generation != generation_) {
    throw GraphError("backward: loss is detached from the active tape");
  }
  node->ensure_grad();
  node->grad[0] = T(1);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (!it->output->grad.empty()) it->backward();
  }
  consumed_ = true;
}

template <class T>
void Tape<T>::reset() {
  entries_.clear();
  ++generation_;
  consumed_ = false;
}

template <class T>
ActiveTape<T>::ActiveTape(Tape<T>* tape) : previous_(Tape<T>::active_) {
  Tape<T>::active_ = tape;
}

template <class T>
ActiveTape<T>::~ActiveTape() {
  Tape<T>::active_ = previous_;
}

// ---- op plumbing ----------------------------------------------------------

namespace {

template <class T>
using NodeP = std::shared_ptr<detail::Node<T>>;

template <class T>
bool any_requires_grad(std::initializer_list<const Tensor<T>*> inputs) {
  if (Tape<T>::active() == nullptr) return false;
  for (const Tensor<T>* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

template <class T>
NodeP<T> new_node(Shape shape, std::vector<T> value) {
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  return node;
}

// Wraps a forward result; when recording, `make_backward(out)` builds the
// closure that propagates out->grad into the inputs.
template <class T, class MakeBackward>
Tensor<T> finish(NodeP<T> out, bool record, MakeBackward&& make_backward) {
  if (record) {
    out->requires_grad = true;
    detail::Node<T>* raw = out.get();
    std::function<void()> fn = make_backward(raw);
    Tape<T>::active()->record(out, std::move(fn));
  }
  return Tensor<T>::from_node(std::move(out));
}

std::size_t normalize_axis(int axis, std::size_t rank, const char* op) {
  const long r = static_cast<long>(rank);
  const long a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

struct AxisSplit {
  std::size_t outer, len, inner;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit r{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

// Result shape of a leading-extent broadcast, or throws.
Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return a;
  auto tail_matches = [](const Shape& big, const Shape& small) {
    return big.size() == small.size() + 1 && std::equal(small.begin(), small.end(), big.begin() + 1);
  };
  if (tail_matches(a, b)) return a;
  if (tail_matches(b, a)) return b;
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

template <class T, class F, class DA, class DB>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, const char* op, F f, DA da, DB db) {
  Shape shape = broadcast_shape(a.shape(), b.shape(), op);
  const std::size_t n = shape_numel(shape);
  const std::size_t na = a.numel(), nb = b.numel();
  auto av = a.values(), bv = b.values();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i % na], bv[i % nb]);
  const bool rec = any_requires_grad<T>({&a, &b});
  return finish<T>(new_node<T>(std::move(shape), std::move(out)), rec, [&](detail::Node<T>* o) {
    return [o, an = a.node(), bn = b.node(), da, db]() {
      const std::size_t n = o->value.size(), na = an->value.size(), nb = bn->value.size();
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
          an->grad[i % na] += o->grad[i] * da(an->value[i % na], bn->value[i % nb], o->value[i]);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
          bn->grad[i % nb] += o->grad[i] * db(an->value[i % na], bn->value[i % nb], o->value[i]);
      }
    };
  });
}

// f(x) forward, d(x, y) local derivative given input and output.
template <class T, class F, class D>
Tensor<T> unary(const Tensor<T>& a, F f, D d) {
  auto av = a.values();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  const bool rec = any_requires_grad<T>({&a});
  return finish<T>(new_node<T>(a.shape(), std::move(out)), rec, [&](detail::Node<T>* o) {
    return [o, an = a.node(), d]() {
      an->ensure_grad();
      for (std::size_t i = 0; i < o->value.size(); ++i) an->grad[i] += o->grad[i] * d(an->value[i], o->value[i]);
    };
  });
}

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapC = Eigen::Map<const RowMat<T>>;
template <class T>
using MapM = Eigen::Map<RowMat<T>>;

// Products run on Eigen-owned aligned copies so the kernel path, and with
// it the summation order, depends only on the shapes.
template <class T>
RowMat<T> owned(const T* data, Eigen::Index rows, Eigen::Index cols) {
  return MapC<T>(data, rows, cols);
}

}  // namespace

// ---- linear algebra -------------------------------------------------------

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  std::vector<T> out(static_cast<std::size_t>(m * n));
  const RowMat<T> product = owned(a.values().data(), m, k) * owned(b.values().data(), k, n);
  MapM<T>(out.data(), m, n) = product;
  const bool rec = any_requires_grad<T>({&a, &b});
  return finish<T>(new_node<T>({a.dim(0), b.dim(1)}, std::move(out)), rec, [&](detail::Node<T>* o) {
    return [o, an = a.node(), bn = b.node(), m, k, n]() {
      const RowMat<T> g = owned(o->grad.data(), m, n);
      if (an->requires_grad) {
        an->ensure_grad();
        const RowMat<T> ga = g * owned(bn->value.data(), k, n).transpose();
        MapM<T>(an->grad.data(), m, k) += ga;
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        const RowMat<T> gb = owned(an->value.data(), m, k).transpose() * g;
        MapM<T>(bn->grad.data(), k, n) += gb;
      }
    };
  });
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_str(a.shape()));
  const std::size_t r = a.dim(0), c = a.dim(1);
  auto av = a.values();
  std::vector<T> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  const bool rec = any_requires_grad<T>({&a});
  return finish<T>(new_node<T>({c, r}, std::move(out)), rec, [&](detail::Node<T>* o) {
    return [o, an = a.node(), r, c]() {
      an->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) an->grad[i * c + j] += o->grad[j * r + i];
    };
  });
}

// ---- elementwise ----------------------------------------------------------

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, "add", [](T x, T y) { return x + y; }, [](T, T, T) { return T(1); },
                [](T, T, T) { return T(1); });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, "sub", [](T x, T y) { return x - y; }, [](T, T, T) { return T(1); },
                [](T, T, T) { return T(-1); });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y, T) { return y; },
                [](T x, T, T) { return x; });
}

template <class T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, "div", [](T x, T y) { return x / y; }, [](T, T y, T) { return T(1) / y; },
                [](T x, T y, T) { return -x / (y * y); });
}

template <class T>
Tensor<T> minimum(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, "minimum", [](T x, T y) { return std::min(x, y); },
                [](T x, T y, T) { return x <= y ? T(1) : T(0); },
                [](T x, T y, T) { return x <= y ? T(0) : T(1); });
}

template <class T>
Tensor<T> maximum(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, "maximum", [](T x, T y) { return std::max(x, y); },
                [](T x, T y, T) { return x >= y ? T(1) : T(0); },
                [](T x, T y, T) { return x >= y ? T(0) : T(1); });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary(a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T offset) {
  return unary(a, [offset](T x) { return x + offset; }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> neg(const Tensor<T>& a) {
  return unary(a, [](T x) { return -x; }, [](T, T) { return T(-1); });
}

template <class T>
Tensor<T> abs(const Tensor<T>& a) {
  return unary(a, [](T x) { return std::abs(x); },
               [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <class T>
Tensor<T> exp(const Tensor<T>& a) {
  return unary(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <class T>
Tensor<T> log(const Tensor<T>& a) {
  return unary(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  return unary(a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary(
      a,
      [](T x) {
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
  return unary(a, [lo, hi](T x) { return std::clamp(x, lo, hi); },
               [lo, hi](T x, T) { return (x >= lo && x <= hi) ? T(1) : T(0); });
}

// ---- softmax family -------------------------------------------------------

template <class T>
Tensor<T> softmax(const Tensor<T>& a, int axis) {
  const std::size_t ax = normalize_axis(axis, a.rank(), "softmax");
  const AxisSplit s = split_axis(a.shape(), ax);
  auto av = a.values();
  std::vector<T> out(av.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      T mx = av[base];
      for (std::size_t k = 1; k < s.len; ++k) mx = std::max(mx, av[base + k * s.inner]);
      T total = 0;
      for (std::size_t k = 0; k < s.len; ++k) {
        const T e = std::exp(av[base + k * s.inner] - mx);
        out[base + k * s.inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < s.len; ++k) out[base + k * s.inner] /= total;
    }
  }
  const bool rec = any_requires_grad<T>({&a});
  return finish<T>(new_node<T>(a.shape(), std::move(out)), rec, [&](detail::Node<T>* o) {
    return [o, an = a.node(), s]() {
      an->ensure_grad();
      for (std::size_t ou = 0; ou < s.outer; ++ou) {
        for (std::size_t in = 0; in < s.inner; ++in) {
          const std::size_t base = ou * s.len * s.inner + in;
          T dot = 0;
          for (std::size_t k = 0; k < s.len; ++k) {
            const std::size_t i = base + k * s.inner;
            dot += o->grad[i] * o->value[i];
          }
          for (std::size_t k = 0; k < s.len; ++k) {
            const std::size_t i = base + k * s.inner;
            an->grad[i] += o->value[i] * (o->grad[i] - dot);
          }
        }
      }
    };
  });
}

template <class T>
Tensor<T> log_softmax(const Tensor<T>& a, int axis) {
  const std::size_t ax = normalize_axis(axis, a.rank(), "log_softmax");
  const AxisSplit s = split_axis(a.shape(), ax);
  auto av = a.values();
  std::vector<T> out(av.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      T mx = av[base];
      for (std::size_t k = 1; k < s.len; ++k) mx = std::max(mx, av[base + k * s.inner]);
      T total = 0;
      for (std::size_t k = 0; k < s.len; ++k) total += std::exp(av[base + k * s.inner] - mx);
      const T lse = mx + std::log(total);
      for (std::size_t k = 0; k < s.len; ++k) out[base + k * s.inner] = av[base + k * s.inner] - lse;
    }
  }
  const bool rec = any_requires_grad<T>({&a});
  return finish<T>(new_node<T>(a.shape(), std::move(out)), rec, [&](detail::Node<T>* o) {
    return [o, an = a.node(), s]() {
      an->ensure_grad();
      for (std::size_t ou = 0; ou < s.outer; ++ou) {
        for (std::size_t in = 0; in < s.inner; ++in) {
          const std::size_t base = ou * s.len * s.inner + in;
          T gsum = 0;
          for (std::size_t k = 0; k < s.len; ++k) gsum += o->grad[base + k * s.inner];
          for (std::size_t k = 0; k < s.len; ++k) {
            const std::size_t i = base + k * s.inner;
            an->grad[i] += o->grad[i] - std::exp(o->value[i]) * gsum;
          }
        }
      }
    };
  });
}

// ---- reductions -----------------------------------------------------------

namespace {

template <class T>
Tensor<T> reduce_axis(const Tensor<T>& a, int axis, bool average, const char* op) {
  const std::size_t ax = normalize_axis(axis, a.rank(), op);
  const AxisSplit s = split_axis(a.shape(), ax);
  Shape shape = a.shape();
  shape.erase(shape.begin() + static_cast<long>(ax));
  const T factor = average ? T(1) / static_cast<T>(s.len) : T(1);
  auto av = a.values();
  std::vector<T> out(s.outer * s.inner, T(0));
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t k = 0; k < s.len; ++k)
      for (std::size_t in = 0; in < s.inner; ++in)
        out[o * s.inner + in] += av[(o * s.len + k) * s.inner + in];
  if (average)
    for (T& v : out) v *= factor;
  const bool rec = any_requires_grad<T>({&a});
  return finish<T>(new_node<T>(std::move(shape), std::move(out)), rec, [&](detail::Node<T>* o) {
    return [o, an = a.node(), s, factor]() {
      an->ensure_grad();
      for (std::size_t ou = 0; ou < s.outer; ++ou)
        for (std::size_t k = 0; k < s.len; ++k)
          for (std::size_t in = 0; in < s.inner; ++in)
            an->grad[(ou * s.len + k) * s.inner + in] += factor * o->grad[ou * s.inner + in];
    };
  });
}

template <class T>
Tensor<T> reduce_all(const Tensor<T>& a, bool average) {
  auto av = a.values();
  T total = 0;
  for (T v : av) total += v;
  const T factor = average ? T(1) / static_cast<T>(av.size()) : T(1);
  const bool rec = any_requires_grad<T>({&a});
  return finish<T>(new_node<T>(Shape{}, std::vector<T>{total * factor}), rec, [&](detail::Node<T>* o) {
    return [o, an = a.node(), factor]() {
      an->ensure_grad();
      for (T& g : an->grad) g += factor * o->grad[0];
    };
  });
}

}  // namespace

template <class T>
Tensor<T> sum(const Tensor<T>& a, int axis) {
  return reduce_axis(a, axis, false, "sum");
}

template <class T>
Tensor<T> mean(const Tensor<T>& a, int axis) {
  return reduce_axis(a, axis, true, "mean");
}

template <class T>
Tensor<T> sum_all(const Tensor<T>& a) {
  return reduce_all(a, false);
}

template <class T>
Tensor<T> mean_all(const Tensor<T>& a) {
  return reduce_all(a, true);
}

// ---- structural -----------------------------------------------------------

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const std::size_t ax = normalize_axis(axis, parts[0].rank(), "concat");
  Shape shape = parts[0].shape();
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape a = p.shape(), b = shape;
    if (a.size() != b.size()) throw ShapeError("concat: rank mismatch " + shape_str(a) + " vs " + shape_str(b));
    a[ax] = b[ax] = 0;
    if (a != b) throw ShapeError("concat: incompatible shapes " + shape_str(p.shape()) + " and " + shape_str(shape));
    total += p.dim(ax);
  }
  shape[ax] = total;
  const AxisSplit s = split_axis(shape, ax);
  std::vector<T> out(shape_numel(shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t len = p.dim(ax);
    auto pv = p.values();
    for (std::size_t o = 0; o < s.outer; ++o)
      std::copy_n(pv.begin() + static_cast<long>(o * len * s.inner), len * s.inner,
                  out.begin() + static_cast<long>((o * s.len + off) * s.inner));
    off += len;
  }
  bool rec = false;
  if (Tape<T>::active() != nullptr)
    for (const auto& p : parts) rec = rec || p.requires_grad();
  std::vector<NodeP<T>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return finish<T>(new_node<T>(std::move(shape), std::move(out)), rec, [&](detail::Node<T>* o) {
    return [o, nodes, offsets, s]() {
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        auto& n = nodes[i];
        if (!n->requires_grad) continue;
        n->ensure_grad();
        const std::size_t len = n->value.size() / (s.outer * s.inner);
        for (std::size_t ou = 0; ou < s.outer; ++ou)
          for (std::size_t j = 0; j < len * s.inner; ++j)
            n->grad[ou * len * s.inner + j] += o->grad[(ou * s.len + offsets[i]) * s.inner + j];
      }
    };
  });
}

template <class T>
Tensor<T> slice(const Tensor<T>& a, int axis, std::size_t begin, std::size_t end) {
  const std::size_t ax = normalize_axis(axis, a.rank(), "slice");
  if (begin >= end || end > a.dim(ax)) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for axis " + std::to_string(ax) + " of " + shape_str(a.shape()));
  }
  const AxisSplit s = split_axis(a.shape(), ax);
  const std::size_t len = end - begin;
  Shape shape = a.shape();
  shape[ax] = len;
  auto av = a.values();
  std::vector<T> out(s.outer * len * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy_n(av.begin() + static_cast<long>((o * s.len + begin) * s.inner), len * s.inner,
                out.begin() + static_cast<long>(o * len * s.inner));
  const bool rec = any_requires_grad<T>({&a});
  return finish<T>(new_node<T>(std::move(shape), std::move(out)), rec, [&](detail::Node<T>* o) {
    return [o, an = a.node(), s, begin, len]() {
      an->ensure_grad();
      for (std::size_t ou = 0; ou < s.outer; ++ou)
        for (std::size_t j = 0; j < len * s.inner; ++j)
          an->grad[(ou * s.len + begin) * s.inner + j] += o->grad[ou * len * s.inner + j];
    };
  });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  auto av = a.values();
  const bool rec = any_requires_grad<T>({&a});
  return finish<T>(new_node<T>(std::move(shape), std::vector<T>(av.begin(), av.end())), rec,
                   [&](detail::Node<T>* o) {
                     return [o, an = a.node()]() {
                       an->ensure_grad();
                       for (std::size_t i = 0; i < o->grad.size(); ++i) an->grad[i] += o->grad[i];
                     };
                   });
}

// ---- normalization / regularization --------------------------------------

template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias) {
  if (x.rank() == 0) throw ShapeError("layer_norm: scalar input");
  const std::size_t d = x.shape().back();
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw ShapeError("layer_norm: input " + shape_str(x.shape()) + " with gain " + shape_str(gain.shape()) +
                     " and bias " + shape_str(bias.shape()));
  }
  const std::size_t rows = x.numel() / d;
  auto xv = x.values();
  auto gv = gain.values();
  auto bv = bias.values();
  std::vector<T> out(xv.size());
  std::vector<T> xhat(xv.size());
  std::vector<T> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * d;
    T mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(d);
    rstd[r] = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEpsilon));
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (row[j] - mu) * rstd[r];
      xhat[r * d + j] = h;
      out[r * d + j] = h * gv[j] + bv[j];
    }
  }
  const bool rec = any_requires_grad<T>({&x, &gain, &bias});
  return finish<T>(new_node<T>(x.shape(), std::move(out)), rec, [&](detail::Node<T>* o) {
    return [o, xn = x.node(), gn = gain.node(), bn = bias.node(), xhat = std::move(xhat), rstd = std::move(rstd),
            rows, d]() {
      if (gn->requires_grad) gn->ensure_grad();
      if (bn->requires_grad) bn->ensure_grad();
      if (xn->requires_grad) xn->ensure_grad();
      std::vector<T> dxhat(d);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* g = o->grad.data() + r * d;
        const T* h = xhat.data() + r * d;
        T mean_dh = 0, mean_dh_h = 0;
        for (std::size_t j = 0; j < d; ++j) {
          if (gn->requires_grad) gn->grad[j] += g[j] * h[j];
          if (bn->requires_grad) bn->grad[j] += g[j];
          dxhat[j] = g[j] * gn->value[j];
          mean_dh += dxhat[j];
          mean_dh_h += dxhat[j] * h[j];
        }
        if (!xn->requires_grad) continue;
        mean_dh /= static_cast<T>(d);
        mean_dh_h /= static_cast<T>(d);
        for (std::size_t j = 0; j < d; ++j)
          xn->grad[r * d + j] += rstd[r] * (dxhat[j] - mean_dh - h[j] * mean_dh_h);
      }
    };
  });
}

template <class T>
Tensor<T> dropout(const Tensor<T>& x, double rate, bool train, Rng* rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ValidationError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!train || rate == 0.0) return x;
  if (rng == nullptr) {
    Tape<T>* tape = Tape<T>::active();
    if (tape == nullptr) throw GraphError("dropout: train-mode dropout needs an active tape for its RNG");
    rng = &tape->rng();
  }
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(x.numel());
  for (T& m : mask) m = rng->uniform() < rate ? T(0) : keep_scale;
  auto xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
  const bool rec = any_requires_grad<T>({&x});
  return finish<T>(new_node<T>(x.shape(), std::move(out)), rec, [&](detail::Node<T>* o) {
    return [o, xn = x.node(), mask = std::move(mask)]() {
      xn->ensure_grad();
      for (std::size_t i = 0; i < mask.size(); ++i) xn->grad[i] += o->grad[i] * mask[i];
    };
  });
}

template <class T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::size_t> indices) {
  if (table.rank() != 2) throw ShapeError("embedding: table must be rank 2, got " + shape_str(table.shape()));
  if (indices.empty()) throw ShapeError("embedding: empty index list");
  const std::size_t n = table.dim(0), d = table.dim(1);
  auto tv = table.values();
  std::vector<T> out(indices.size() * d);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= n) {
      throw ShapeError("embedding: index " + std::to_string(indices[i]) + " out of range for table " +
                       shape_str(table.shape()));
    }
    std::copy_n(tv.begin() + static_cast<long>(indices[i] * d), d, out.begin() + static_cast<long>(i * d));
  }
  const bool rec = any_requires_grad<T>({&table});
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return finish<T>(new_node<T>({indices.size(), d}, std::move(out)), rec, [&](detail::Node<T>* o) {
    return [o, tn = table.node(), idx = std::move(idx), d]() {
      tn->ensure_grad();
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) tn->grad[idx[i] * d + j] += o->grad[i * d + j];
    };
  });
}

// ---- instantiations -------------------------------------------------------

#define COFORMER_INSTANTIATE_OPS(T)                                                              \
  template class Tensor<T>;                                                                      \
  template class Tape<T>;                                                                        \
  template class ActiveTape<T>;                                                                  \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> transpose(const Tensor<T>&);                                                \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> minimum(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> maximum(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> scale(const Tensor<T>&, T);                                                 \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                            \
  template Tensor<T> neg(const Tensor<T>&);                                                      \
  template Tensor<T> abs(const Tensor<T>&);                                                      \
  template Tensor<T> exp(const Tensor<T>&);                                                      \
  template Tensor<T> log(const Tensor<T>&);                                                      \
  template Tensor<T> relu(const Tensor<T>&);                                                     \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                  \
  template Tensor<T> clamp(const Tensor<T>&, T, T);                                              \
  template Tensor<T> softmax(const Tensor<T>&, int);                                             \
  template Tensor<T> log_softmax(const Tensor<T>&, int);                                         \
  template Tensor<T> sum(const Tensor<T>&, int);                                                 \
  template Tensor<T> mean(const Tensor<T>&, int);                                                \
  template Tensor<T> sum_all(const Tensor<T>&);                                                  \
  template Tensor<T> mean_all(const Tensor<T>&);                                                 \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                                 \
  template Tensor<T> slice(const Tensor<T>&, int, std::size_t, std::size_t);                     \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                           \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> dropout(const Tensor<T>&, double, bool, Rng*);                                    \
  template Tensor<T> embedding(const Tensor<T>&, std::span<const std::size_t>);

COFORMER_INSTANTIATE_OPS(float)
COFORMER_INSTANTIATE_OPS(double)

}  // namespace coformer
