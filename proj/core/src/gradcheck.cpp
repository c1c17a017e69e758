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

#include "coformer/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "coformer/error.hpp"
#include "coformer/rng.hpp"

namespace coformer {

namespace {

double scalar_of(const TensorD& y) {
  if (y.numel() != 1) throw ShapeError("grad_check: function must be scalar-valued, got " + shape_str(y.shape()));
  return y.item();
}

// Probes coordinates `coords` of `x` (analytic gradient `analytic`),
// folding results into `result`. Returns false after a non-finite value.
bool probe(const std::function<double()>& eval, TensorD& x, std::span<const double> analytic,
           const std::vector<std::size_t>& coords, double step, const std::string& name,
           GradCheckResult& result) {
  auto values = x.mutable_values();
  for (std::size_t i : coords) {
    const double saved = values[i];
    values[i] = saved + step;
    const double fp = eval();
    values[i] = saved - step;
    const double fm = eval();
    values[i] = saved;
    const double numeric = (fp - fm) / (2.0 * step);
    const double a = analytic.empty() ? 0.0 : analytic[i];
    ++result.coordinates_checked;
    if (!std::isfinite(numeric) || !std::isfinite(a)) {
      result.non_finite_index = i;
      result.non_finite_param = name;
      return false;
    }
    const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(a));
    if (rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_index = i;
      result.worst_param = name;
    }
  }
  return true;
}

}  // namespace

GradCheckResult grad_check(const std::function<TensorD(const TensorD&)>& f, const TensorD& point, double step) {
  if (!(step > 0.0)) throw ValidationError("grad_check: step must be positive");
  TensorD x = point.clone();
  x.set_requires_grad(true);
  x.clear_grad();
  {
    Tape<double> tape;
    ActiveTape<double> scope(tape);
    TensorD y = f(x);
    scalar_of(y);
    if (y.requires_grad()) tape.backward(y);
  }
  std::vector<double> analytic(x.grad().begin(), x.grad().end());
  if (analytic.empty()) analytic.assign(x.numel(), 0.0);

  GradCheckResult result;
  NoGrad<double> no_grad;
  std::vector<std::size_t> coords(x.numel());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  probe([&] { return scalar_of(f(x)); }, x, analytic, coords, step, "x", result);
  return result;
}

GradCheckResult grad_check_params(const std::function<TensorD()>& f, std::vector<NamedTensor> params, double step,
                                  std::size_t max_coords_per_param, std::uint64_t seed) {
  if (!(step > 0.0)) throw ValidationError("grad_check: step must be positive");
  for (auto& p : params) {
    p.tensor.set_requires_grad(true);
    p.tensor.clear_grad();
  }
  {
    Tape<double> tape;
    ActiveTape<double> scope(tape);
    TensorD y = f();
    scalar_of(y);
    if (y.requires_grad()) tape.backward(y);
  }
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) {
    auto g = p.tensor.grad();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().empty()) analytic.back().assign(p.tensor.numel(), 0.0);
  }

  GradCheckResult result;
  NoGrad<double> no_grad;
  Rng rng(seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    std::vector<std::size_t> coords(p.tensor.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (max_coords_per_param != 0 && coords.size() > max_coords_per_param) {
      rng.shuffle(coords);
      coords.resize(max_coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    if (!probe([&] { return scalar_of(f()); }, p.tensor, analytic[pi], coords, step, p.name, result)) break;
  }
  return result;
}

}  // namespace coformer
