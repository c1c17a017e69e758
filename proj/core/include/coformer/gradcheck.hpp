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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "coformer/tensor.hpp"

namespace coformer {

struct GradCheckResult {
  // max over coordinates of |analytic - central difference| / max(1, |analytic|)
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::string worst_param;
  std::size_t coordinates_checked = 0;
  // First coordinate whose analytic or numeric derivative was non-finite.
  std::optional<std::size_t> non_finite_index;
  std::string non_finite_param;

  bool passed(double tolerance) const { return !non_finite_index && max_rel_error < tolerance; }
};

// Checks the gradient of scalar-valued `f` at `point` against central
// differences with the given step.
GradCheckResult grad_check(const std::function<TensorD(const TensorD&)>& f, const TensorD& point,
                           double step = 1e-5);

struct NamedTensor {
  std::string name;
  TensorD tensor;
};

// Same check over every coordinate of several parameter tensors that `f`
// closes over. When `max_coords_per_param` is nonzero, a seeded random
// subset of that many coordinates is probed per tensor.
GradCheckResult grad_check_params(const std::function<TensorD()>& f, std::vector<NamedTensor> params,
                                  double step = 1e-5, std::size_t max_coords_per_param = 0,
                                  std::uint64_t seed = 0);

}  // namespace coformer
