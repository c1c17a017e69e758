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

// Reference scorer written directly from the metric rules, sharing no
// code with the library's eval module.

#include <vector>

#include "coformer/dataset.hpp"
#include "coformer/model.hpp"
#include "coformer/ontology.hpp"

namespace coformer::testing {

// Top-1 (verb, value, value-all, grnd-value, grnd-value-all), Top-5 (same),
// GT-Verb (value, value-all, grnd-value, grnd-value-all), in percent.
std::vector<double> brute_force_metrics(const std::vector<PredictionRecord>& predictions,
                                        const std::vector<GroundedAnnotation>& annotations,
                                        const Ontology& ontology);

// Overlap ratio from explicit interval arithmetic.
double reference_iou(double ax1, double ay1, double ax2, double ay2, double bx1, double by1, double bx2,
                     double by2);

}  // namespace coformer::testing
