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

#include "coformer/losses.hpp"

#include <algorithm>
#include <cstdio>

#include "coformer/error.hpp"

namespace coformer {

void LossConfig::validate() const {
  for (double c : {verb, noun1, noun2, noun3, box_exist, l1, giou}) {
    if (!(c > 0.0)) throw ValidationError("loss config: coefficients must be positive");
  }
  for (double e : {verb_smoothing, noun_smoothing}) {
    if (!(e >= 0.0 && e < 1.0)) throw ValidationError("loss config: label smoothing must lie in [0, 1)");
  }
}

std::string LossReport::to_json() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "{\"verb\":%.9g,\"noun1\":%.9g,\"noun2\":%.9g,\"noun3\":%.9g,\"box_exist\":%.9g,\"l1\":%.9g,"
                "\"giou\":%.9g,\"total\":%.9g}",
                verb, noun1, noun2, noun3, box_exist, l1, giou, total);
  return buf;
}

namespace {

template <class T>
void add_smoothed_target(std::span<T> row, std::size_t target, double epsilon) {
  const double floor = epsilon / static_cast<double>(row.size());
  for (T& v : row) v += static_cast<T>(floor);
  row[target] += static_cast<T>(1.0 - epsilon);
}

// Rows of `boxes` whose role carries a ground-truth box, plus the targets.
template <class T>
bool boxed_rows(const Tensor<T>& boxes, const GroundedAnnotation& a, Tensor<T>& pred, Tensor<T>& target) {
  if (boxes.rank() != 2 || boxes.dim(0) != a.roles.size() || boxes.dim(1) != 4) {
    throw ShapeError("box loss: boxes " + shape_str(boxes.shape()) + " do not match a frame of " +
                     std::to_string(a.roles.size()) + " roles");
  }
  std::vector<std::size_t> rows;
  std::vector<T> t;
  for (std::size_t k = 0; k < a.roles.size(); ++k) {
    if (!a.roles[k].box) continue;
    const Box& b = *a.roles[k].box;
    rows.push_back(k);
    t.insert(t.end(), {static_cast<T>(b.cx), static_cast<T>(b.cy), static_cast<T>(b.w), static_cast<T>(b.h)});
  }
  if (rows.empty()) return false;
  pred = embedding(boxes, rows);
  target = Tensor<T>({rows.size(), 4}, std::move(t));
  return true;
}

template <class T>
Tensor<T> column(const Tensor<T>& x, std::size_t c) {
  return reshape(slice(x, 1, c, c + 1), {x.dim(0)});
}

}  // namespace

template <class T>
Tensor<T> smoothed_cross_entropy(const Tensor<T>& logits, std::size_t target, double epsilon) {
  const std::size_t classes = logits.numel();
  if (target >= classes) throw ShapeError("cross-entropy: target " + std::to_string(target) + " out of " +
                                          std::to_string(classes) + " classes");
  const Tensor<T> flat = reshape(logits, {classes});
  std::vector<T> q(classes, T(0));
  add_smoothed_target<T>(q, target, epsilon);
  return neg(sum_all(mul(Tensor<T>({classes}, std::move(q)), log_softmax(flat, 0))));
}

template <class T>
Tensor<T> verb_loss(const Tensor<T>& verb_logits, VerbId verb, const LossConfig& config) {
  return smoothed_cross_entropy(verb_logits, verb, config.verb_smoothing);
}

template <class T>
Tensor<T> noun_loss(const Tensor<T>& logits, const GroundedAnnotation& a, const LossConfig& config) {
  if (logits.rank() != 2 || logits.dim(0) != a.roles.size()) {
    throw ShapeError("noun loss: logits " + shape_str(logits.shape()) + " do not match a frame of " +
                     std::to_string(a.roles.size()) + " roles");
  }
  const std::size_t roles = logits.dim(0), classes = logits.dim(1);
  std::vector<T> q(roles * classes, T(0));
  for (std::size_t k = 0; k < roles; ++k) {
    std::span<T> row(q.data() + k * classes, classes);
    for (NounId n : a.roles[k].nouns) {
      if (n >= classes) throw ShapeError("noun loss: noun id " + std::to_string(n) + " out of range");
      add_smoothed_target(row, n, config.noun_smoothing);
    }
  }
  const Tensor<T> weighted = mul(Tensor<T>({roles, classes}, std::move(q)), log_softmax(logits, 1));
  return scale(sum_all(weighted), static_cast<T>(-1.0 / static_cast<double>(roles)));
}

template <class T>
Tensor<T> box_exist_loss(const Tensor<T>& exist, const GroundedAnnotation& a) {
  if (exist.numel() != a.roles.size()) {
    throw ShapeError("box-exist loss: " + shape_str(exist.shape()) + " probabilities for " +
                     std::to_string(a.roles.size()) + " roles");
  }
  const std::size_t n = a.roles.size();
  std::vector<T> t(n);
  for (std::size_t k = 0; k < n; ++k) t[k] = a.roles[k].box ? T(1) : T(0);
  const Tensor<T> target({n}, t);
  std::vector<T> inv(n);
  for (std::size_t k = 0; k < n; ++k) inv[k] = T(1) - t[k];
  const Tensor<T> p = clamp(reshape(exist, {n}), static_cast<T>(kProbabilityClamp),
                            static_cast<T>(1.0 - kProbabilityClamp));
  const Tensor<T> ll = add(mul(target, log(p)), mul(Tensor<T>({n}, std::move(inv)), log(add_scalar(neg(p), T(1)))));
  return neg(mean_all(ll));
}

template <class T>
Tensor<T> l1_box_loss(const Tensor<T>& boxes, const GroundedAnnotation& a) {
  Tensor<T> pred, target;
  if (!boxed_rows(boxes, a, pred, target)) return Tensor<T>::scalar(T(0));
  return scale(sum_all(abs(sub(pred, target))), static_cast<T>(1.0 / static_cast<double>(pred.dim(0))));
}

template <class T>
Tensor<T> giou_tensor(const Tensor<T>& a, const Tensor<T>& b) {
  auto corners = [](const Tensor<T>& x) {
    const Tensor<T> cx = column(x, 0), cy = column(x, 1);
    const Tensor<T> hw = scale(column(x, 2), T(0.5)), hh = scale(column(x, 3), T(0.5));
    return std::array<Tensor<T>, 4>{sub(cx, hw), sub(cy, hh), add(cx, hw), add(cy, hh)};
  };
  const auto p = corners(a), q = corners(b);
  const Tensor<T> area_p = mul(sub(p[2], p[0]), sub(p[3], p[1]));
  const Tensor<T> area_q = mul(sub(q[2], q[0]), sub(q[3], q[1]));
  const Tensor<T> iw = relu(sub(minimum(p[2], q[2]), maximum(p[0], q[0])));
  const Tensor<T> ih = relu(sub(minimum(p[3], q[3]), maximum(p[1], q[1])));
  const Tensor<T> inter = mul(iw, ih);
  const Tensor<T> uni = sub(add(area_p, area_q), inter);
  const Tensor<T> cw = sub(maximum(p[2], q[2]), minimum(p[0], q[0]));
  const Tensor<T> ch = sub(maximum(p[3], q[3]), minimum(p[1], q[1]));
  const Tensor<T> enclosing = mul(cw, ch);
  return sub(div(inter, uni), div(sub(enclosing, uni), enclosing));
}

template <class T>
Tensor<T> giou_box_loss(const Tensor<T>& boxes, const GroundedAnnotation& a) {
  Tensor<T> pred, target;
  if (!boxed_rows(boxes, a, pred, target)) return Tensor<T>::scalar(T(0));
  return mean_all(add_scalar(neg(giou_tensor(pred, target)), T(1)));
}

template <class T>
LossTerms<T> compute_losses(const ForwardOutput<T>& out, const GroundedAnnotation& a, const LossConfig& config) {
  if (out.conditioning_verb != a.verb) {
    throw ValidationError("losses: forward pass was conditioned on a verb other than the annotated one");
  }
  LossTerms<T> t;
  const Tensor<T> zero = Tensor<T>::scalar(T(0));
  t.verb = verb_loss(out.verb_logits, a.verb, config);
  t.noun1 = out.aux_decoder_logits.defined() ? noun_loss(out.aux_decoder_logits, a, config) : zero;
  t.noun2 = out.aux_encoder_logits.defined() ? noun_loss(out.aux_encoder_logits, a, config) : zero;
  t.noun3 = noun_loss(out.gaze2.noun_logits, a, config);
  t.box_exist = box_exist_loss(out.gaze2.box_exist, a);
  t.l1 = l1_box_loss(out.gaze2.boxes, a);
  t.giou = giou_box_loss(out.gaze2.boxes, a);
  return t;
}

template <class T>
Tensor<T> total_loss(const LossTerms<T>& t, const LossConfig& c) {
  Tensor<T> sum = scale(t.verb, static_cast<T>(c.verb));
  sum = add(sum, scale(t.noun1, static_cast<T>(c.noun1)));
  sum = add(sum, scale(t.noun2, static_cast<T>(c.noun2)));
  sum = add(sum, scale(t.noun3, static_cast<T>(c.noun3)));
  sum = add(sum, scale(t.box_exist, static_cast<T>(c.box_exist)));
  sum = add(sum, scale(t.l1, static_cast<T>(c.l1)));
  sum = add(sum, scale(t.giou, static_cast<T>(c.giou)));
  return sum;
}

template <class T>
LossReport report_losses(const LossTerms<T>& t, const LossConfig& c) {
  LossReport r;
  r.verb = t.verb.item();
  r.noun1 = t.noun1.item();
  r.noun2 = t.noun2.item();
  r.noun3 = t.noun3.item();
  r.box_exist = t.box_exist.item();
  r.l1 = t.l1.item();
  r.giou = t.giou.item();
  r.total = c.verb * r.verb + c.noun1 * r.noun1 + c.noun2 * r.noun2 + c.noun3 * r.noun3 + c.box_exist * r.box_exist +
            c.l1 * r.l1 + c.giou * r.giou;
  return r;
}

double box_area(const Corners& b) { return std::max(0.0, b.x2 - b.x1) * std::max(0.0, b.y2 - b.y1); }

double iou(const Corners& a, const Corners& b) {
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double uni = box_area(a) + box_area(b) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double giou(const Corners& a, const Corners& b) {
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double uni = box_area(a) + box_area(b) - inter;
  const double enclosing = (std::max(a.x2, b.x2) - std::min(a.x1, b.x1)) * (std::max(a.y2, b.y2) - std::min(a.y1, b.y1));
  if (!(enclosing > 0.0)) throw ValidationError("giou: enclosing box has zero area");
  const double i = uni > 0.0 ? inter / uni : 0.0;
  return i - (enclosing - uni) / enclosing;
}

#define COFORMER_INSTANTIATE_LOSSES(T)                                                                    \
  template Tensor<T> smoothed_cross_entropy(const Tensor<T>&, std::size_t, double);                       \
  template Tensor<T> verb_loss(const Tensor<T>&, VerbId, const LossConfig&);                              \
  template Tensor<T> noun_loss(const Tensor<T>&, const GroundedAnnotation&, const LossConfig&);           \
  template Tensor<T> box_exist_loss(const Tensor<T>&, const GroundedAnnotation&);                         \
  template Tensor<T> l1_box_loss(const Tensor<T>&, const GroundedAnnotation&);                            \
  template Tensor<T> giou_box_loss(const Tensor<T>&, const GroundedAnnotation&);                          \
  template Tensor<T> giou_tensor(const Tensor<T>&, const Tensor<T>&);                                     \
  template LossTerms<T> compute_losses(const ForwardOutput<T>&, const GroundedAnnotation&, const LossConfig&); \
  template Tensor<T> total_loss(const LossTerms<T>&, const LossConfig&);                                  \
  template LossReport report_losses(const LossTerms<T>&, const LossConfig&);

COFORMER_INSTANTIATE_LOSSES(float)
COFORMER_INSTANTIATE_LOSSES(double)

}  // namespace coformer
