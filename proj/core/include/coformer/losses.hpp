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

#include <span>
#include <string>
#include <vector>

#include "coformer/dataset.hpp"
#include "coformer/model.hpp"
#include "coformer/tensor.hpp"

namespace coformer {

struct LossConfig {
  double verb = 1.0;
  double noun1 = 2.0;  // Gaze-S1 decoder auxiliary classifier
  double noun2 = 2.0;  // Gaze-S1 encoder auxiliary classifier
  double noun3 = 1.0;  // Gaze-S2 noun head
  double box_exist = 5.0;
  double l1 = 5.0;
  double giou = 5.0;
  double verb_smoothing = 0.3;
  double noun_smoothing = 0.2;

  void validate() const;
  bool operator==(const LossConfig&) const = default;
};

// Probability floor of the binary cross-entropy.
inline constexpr double kProbabilityClamp = 1e-7;

template <class T>
struct LossTerms {
  Tensor<T> verb, noun1, noun2, noun3, box_exist, l1, giou;
};

struct LossReport {
  double verb = 0, noun1 = 0, noun2 = 0, noun3 = 0, box_exist = 0, l1 = 0, giou = 0;
  double total = 0;

  std::vector<double> terms() const { return {verb, noun1, noun2, noun3, box_exist, l1, giou}; }
  // {"verb":..,"noun1":..,...,"total":..}
  std::string to_json() const;
};

// Cross-entropy of `logits` ([C] or [1, C]) against
// (1 - eps) * onehot(target) + eps / C.
template <class T>
Tensor<T> smoothed_cross_entropy(const Tensor<T>& logits, std::size_t target, double epsilon);

template <class T>
Tensor<T> verb_loss(const Tensor<T>& verb_logits, VerbId verb, const LossConfig& config);

// Rows of `logits` follow the frame order of `annotation`. Per role, the
// three annotators' smoothed cross-entropies are summed; roles are averaged.
template <class T>
Tensor<T> noun_loss(const Tensor<T>& logits, const GroundedAnnotation& annotation, const LossConfig& config);

// Binary cross-entropy over all frame roles, target 1 iff the role is boxed.
template <class T>
Tensor<T> box_exist_loss(const Tensor<T>& exist, const GroundedAnnotation& annotation);

// Mean over boxed roles of the coordinate-wise L1 gap in (cx, cy, w, h);
// zero when no role is boxed.
template <class T>
Tensor<T> l1_box_loss(const Tensor<T>& boxes, const GroundedAnnotation& annotation);

// Mean over boxed roles of 1 - GIoU; zero when no role is boxed.
template <class T>
Tensor<T> giou_box_loss(const Tensor<T>& boxes, const GroundedAnnotation& annotation);

// Elementwise GIoU of two [n, 4] center-form box tensors, shape [n].
template <class T>
Tensor<T> giou_tensor(const Tensor<T>& a, const Tensor<T>& b);

// All seven terms for one sample. Terms of removed modules are zero.
template <class T>
LossTerms<T> compute_losses(const ForwardOutput<T>& output, const GroundedAnnotation& annotation,
                            const LossConfig& config);

template <class T>
Tensor<T> total_loss(const LossTerms<T>& terms, const LossConfig& config);

template <class T>
LossReport report_losses(const LossTerms<T>& terms, const LossConfig& config);

// ---- scalar box geometry ----------------------------------------------------

double box_area(const Corners& b);
double iou(const Corners& a, const Corners& b);
// IoU minus the uncovered fraction of the enclosing box. Throws
// ValidationError when the enclosing box has zero area.
double giou(const Corners& a, const Corners& b);

}  // namespace coformer
