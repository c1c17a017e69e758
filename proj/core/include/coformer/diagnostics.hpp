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

#include <cstdint>
#include <string>
#include <vector>

namespace coformer {

struct CheckOutcome {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string detail;  // worst coordinate or non-finite diagnostic
};

// 64-bit finite-difference checks of every differentiable primitive on
// randomized small shapes, kept away from kinks.
std::vector<CheckOutcome> primitive_gradchecks(std::uint64_t seed, double tolerance = 1e-6);

// The seven loss terms on random fixtures.
std::vector<CheckOutcome> loss_gradchecks(std::uint64_t seed, double tolerance = 1e-4);

// Total loss of a tiny model on one synthetic sample, dropout off. A
// nonzero `coords_per_param` probes a seeded subset of each tensor.
CheckOutcome model_gradcheck(std::uint64_t seed, double tolerance = 1e-3, std::size_t coords_per_param = 48);

}  // namespace coformer
