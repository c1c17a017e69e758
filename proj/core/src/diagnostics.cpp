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

#include "coformer/diagnostics.hpp"

#include <cstdio>
#include <functional>

#include "coformer/dataset.hpp"
#include "coformer/gradcheck.hpp"
#include "coformer/losses.hpp"
#include "coformer/model.hpp"

namespace coformer {

namespace {

using Inputs = std::vector<NamedTensor>;
using Fn = std::function<TensorD(const std::vector<TensorD>&)>;

CheckOutcome outcome(const std::string& name, const GradCheckResult& r, double tol) {
  CheckOutcome o;
  o.name = name;
  o.max_rel_error = r.max_rel_error;
  o.tolerance = tol;
  o.passed = r.passed(tol);
  char buf[160];
  if (r.non_finite_index) {
    std::snprintf(buf, sizeof(buf), "non-finite derivative at %s[%zu]", r.non_finite_param.c_str(),
                  *r.non_finite_index);
  } else {
    std::snprintf(buf, sizeof(buf), "worst %s[%zu] over %zu coordinates", r.worst_param.c_str(), r.worst_index,
                  r.coordinates_checked);
  }
  o.detail = buf;
  return o;
}

// Values whose magnitude lies in [lo, hi] with a random sign.
TensorD signed_values(Shape shape, double lo, double hi, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(lo, hi);
  return TensorD(std::move(shape), std::move(v));
}

TensorD uniform_values(Shape shape, double lo, double hi, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return TensorD(std::move(shape), std::move(v));
}

// Projects an output onto fixed random weights so every coordinate of the
// output contributes to the scalar.
CheckOutcome run(const std::string& name, Inputs inputs, const Fn& f, double tol, Rng& rng) {
  std::vector<TensorD> handles;
  for (auto& in : inputs) handles.push_back(in.tensor);
  TensorD probe_weights;
  {
    NoGrad<double> no_grad;
    const TensorD y = f(handles);
    probe_weights = uniform_values(y.shape().empty() ? Shape{1} : y.shape(), 0.5, 1.5, rng);
    if (y.shape().empty()) probe_weights = TensorD::scalar(probe_weights.at(0));
  }
  auto scalar = [&] { return sum_all(mul(f(handles), probe_weights)); };
  return outcome(name, grad_check_params(scalar, inputs), tol);
}

GroundedAnnotation random_annotation(std::size_t roles, std::size_t classes, Rng& rng, bool boxes) {
  GroundedAnnotation a;
  a.image_id = "fixture";
  for (std::size_t k = 0; k < roles; ++k) {
    RoleAnnotation r;
    r.role = k;
    for (auto& n : r.nouns) n = rng.uniform_index(classes);
    if (boxes && k != 1) {
      r.box = Box{rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), rng.uniform(0.2, 0.4), rng.uniform(0.2, 0.4)};
    }
    a.roles.push_back(r);
  }
  return a;
}

}  // namespace

std::vector<CheckOutcome> primitive_gradchecks(std::uint64_t seed, double tol) {
  Rng rng = Rng::derive(seed, {0x6C});
  std::vector<CheckOutcome> out;
  auto one = [&](const std::string& name, TensorD x, std::function<TensorD(const TensorD&)> op) {
    out.push_back(run(name, {{"x", std::move(x)}}, [op](const std::vector<TensorD>& in) { return op(in[0]); }, tol, rng));
  };
  auto two = [&](const std::string& name, TensorD a, TensorD b,
                 std::function<TensorD(const TensorD&, const TensorD&)> op) {
    out.push_back(run(name, {{"a", std::move(a)}, {"b", std::move(b)}},
                      [op](const std::vector<TensorD>& in) { return op(in[0], in[1]); }, tol, rng));
  };

  two("matmul", signed_values({3, 4}, 0.1, 1.0, rng), signed_values({4, 2}, 0.1, 1.0, rng),
      [](const TensorD& a, const TensorD& b) { return matmul(a, b); });
  out.push_back(run("matmul_chain",
                    {{"a", signed_values({2, 3}, 0.1, 1.0, rng)},
                     {"b", signed_values({3, 4}, 0.1, 1.0, rng)},
                     {"c", signed_values({4, 2}, 0.1, 1.0, rng)}},
                    [](const std::vector<TensorD>& in) { return matmul(matmul(in[0], in[1]), in[2]); }, tol, rng));
  one("transpose", signed_values({3, 2}, 0.1, 1.0, rng), [](const TensorD& x) { return transpose(x); });
  two("add", signed_values({3, 4}, 0.1, 1.0, rng), signed_values({3, 4}, 0.1, 1.0, rng),
      [](const TensorD& a, const TensorD& b) { return add(a, b); });
  two("add_broadcast", signed_values({3, 4}, 0.1, 1.0, rng), signed_values({4}, 0.1, 1.0, rng),
      [](const TensorD& a, const TensorD& b) { return add(a, b); });
  two("sub", signed_values({2, 3}, 0.1, 1.0, rng), signed_values({3}, 0.1, 1.0, rng),
      [](const TensorD& a, const TensorD& b) { return sub(a, b); });
  two("mul", signed_values({2, 3}, 0.1, 1.0, rng), signed_values({2, 3}, 0.1, 1.0, rng),
      [](const TensorD& a, const TensorD& b) { return mul(a, b); });
  two("div", signed_values({2, 3}, 0.1, 1.0, rng), uniform_values({2, 3}, 0.5, 2.0, rng),
      [](const TensorD& a, const TensorD& b) { return div(a, b); });
  {
    TensorD a = signed_values({2, 3}, 0.1, 1.0, rng);
    std::vector<double> bv(a.values().begin(), a.values().end());
    for (double& x : bv) x += (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.2, 1.0);
    TensorD b({2, 3}, bv);
    two("minimum", a.clone(), b.clone(), [](const TensorD& x, const TensorD& y) { return minimum(x, y); });
    two("maximum", a, b, [](const TensorD& x, const TensorD& y) { return maximum(x, y); });
  }
  one("scale", signed_values({5}, 0.1, 1.0, rng), [](const TensorD& x) { return scale(x, -1.7); });
  one("add_scalar", signed_values({5}, 0.1, 1.0, rng), [](const TensorD& x) { return add_scalar(x, 0.3); });
  one("neg", signed_values({5}, 0.1, 1.0, rng), [](const TensorD& x) { return neg(x); });
  one("abs", signed_values({6}, 0.2, 1.0, rng), [](const TensorD& x) { return abs(x); });
  one("exp", signed_values({6}, 0.1, 1.5, rng), [](const TensorD& x) { return exp(x); });
  one("log", uniform_values({6}, 0.5, 2.0, rng), [](const TensorD& x) { return log(x); });
  one("relu", signed_values({6}, 0.2, 1.0, rng), [](const TensorD& x) { return relu(x); });
  one("sigmoid", signed_values({6}, 0.1, 3.0, rng), [](const TensorD& x) { return sigmoid(x); });
  {
    std::vector<double> v(6);
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double band[3][2] = {{-1.5, -0.7}, {-0.3, 0.3}, {0.7, 1.5}};
      const auto& b = band[i % 3];
      v[i] = rng.uniform(b[0], b[1]);
    }
    one("clamp", TensorD({6}, v), [](const TensorD& x) { return clamp(x, -0.5, 0.5); });
  }
  one("softmax_axis0", signed_values({3, 4}, 0.1, 2.0, rng), [](const TensorD& x) { return softmax(x, 0); });
  one("softmax_axis1", signed_values({3, 4}, 0.1, 2.0, rng), [](const TensorD& x) { return softmax(x, 1); });
  one("log_softmax_axis0", signed_values({3, 4}, 0.1, 2.0, rng), [](const TensorD& x) { return log_softmax(x, 0); });
  one("log_softmax_axis1", signed_values({3, 4}, 0.1, 2.0, rng), [](const TensorD& x) { return log_softmax(x, 1); });
  out.push_back(run("layer_norm",
                    {{"x", signed_values({3, 5}, 0.1, 2.0, rng)},
                     {"gain", uniform_values({5}, 0.5, 1.5, rng)},
                     {"bias", signed_values({5}, 0.1, 1.0, rng)}},
                    [](const std::vector<TensorD>& in) { return layer_norm(in[0], in[1], in[2]); }, tol, rng));
  one("sum_axis0", signed_values({3, 4}, 0.1, 1.0, rng), [](const TensorD& x) { return sum(x, 0); });
  one("sum_axis1", signed_values({3, 4}, 0.1, 1.0, rng), [](const TensorD& x) { return sum(x, 1); });
  one("mean_axis0", signed_values({3, 4}, 0.1, 1.0, rng), [](const TensorD& x) { return mean(x, 0); });
  one("mean_axis1", signed_values({3, 4}, 0.1, 1.0, rng), [](const TensorD& x) { return mean(x, 1); });
  one("sum_all", signed_values({3, 4}, 0.1, 1.0, rng), [](const TensorD& x) { return sum_all(x); });
  one("mean_all", signed_values({3, 4}, 0.1, 1.0, rng), [](const TensorD& x) { return mean_all(x); });
  two("concat_axis0", signed_values({2, 3}, 0.1, 1.0, rng), signed_values({1, 3}, 0.1, 1.0, rng),
      [](const TensorD& a, const TensorD& b) { return concat<double>({a, b}, 0); });
  two("concat_axis1", signed_values({2, 3}, 0.1, 1.0, rng), signed_values({2, 2}, 0.1, 1.0, rng),
      [](const TensorD& a, const TensorD& b) { return concat<double>({a, b}, 1); });
  one("slice_axis0", signed_values({4, 3}, 0.1, 1.0, rng), [](const TensorD& x) { return slice(x, 0, 1, 3); });
  one("slice_axis1", signed_values({3, 5}, 0.1, 1.0, rng), [](const TensorD& x) { return slice(x, 1, 2, 5); });
  one("reshape", signed_values({2, 6}, 0.1, 1.0, rng), [](const TensorD& x) { return reshape(x, {3, 4}); });
  one("embedding", signed_values({4, 3}, 0.1, 1.0, rng), [](const TensorD& x) {
    const std::size_t idx[] = {2, 0, 2, 3};
    return embedding(x, std::span<const std::size_t>(idx));
  });
  const std::uint64_t mask_seed = rng.next_u64();
  one("dropout", signed_values({4, 5}, 0.1, 1.0, rng), [mask_seed](const TensorD& x) {
    Rng mask(mask_seed);
    return dropout(x, 0.3, true, &mask);
  });
  return out;
}

std::vector<CheckOutcome> loss_gradchecks(std::uint64_t seed, double tol) {
  Rng rng = Rng::derive(seed, {0x1055});
  const LossConfig config;
  std::vector<CheckOutcome> out;
  {
    const std::size_t target = rng.uniform_index(7);
    out.push_back(run("loss_verb", {{"logits", signed_values({7}, 0.1, 2.0, rng)}},
                      [&](const std::vector<TensorD>& in) { return verb_loss(in[0], target, config); }, tol, rng));
  }
  for (const char* name : {"loss_noun1", "loss_noun2", "loss_noun3"}) {
    const GroundedAnnotation a = random_annotation(3, 6, rng, false);
    out.push_back(run(name, {{"logits", signed_values({3, 6}, 0.1, 2.0, rng)}},
                      [a, &config](const std::vector<TensorD>& in) { return noun_loss(in[0], a, config); }, tol,
                      rng));
  }
  {
    const GroundedAnnotation a = random_annotation(4, 5, rng, true);
    out.push_back(run("loss_box_exist", {{"exist", uniform_values({4}, 0.1, 0.9, rng)}},
                      [a](const std::vector<TensorD>& in) { return box_exist_loss(in[0], a); }, tol, rng));
  }
  {
    const GroundedAnnotation a = random_annotation(4, 5, rng, true);
    std::vector<double> v;
    for (const auto& r : a.roles) {
      const Box b = r.box.value_or(Box{0.5, 0.5, 0.3, 0.3});
      for (double c : {b.cx, b.cy, b.w, b.h}) v.push_back(c + (rng.bernoulli(0.5) ? 1 : -1) * rng.uniform(0.03, 0.1));
    }
    out.push_back(run("loss_l1", {{"boxes", TensorD({4, 4}, v)}},
                      [a](const std::vector<TensorD>& in) { return l1_box_loss(in[0], a); }, tol, rng));
    out.push_back(run("loss_giou", {{"boxes", TensorD({4, 4}, v)}},
                      [a](const std::vector<TensorD>& in) { return giou_box_loss(in[0], a); }, tol, rng));
  }
  return out;
}

CheckOutcome model_gradcheck(std::uint64_t seed, double tol, std::size_t coords_per_param) {
  const Ontology ontology = synthetic_ontology();
  SyntheticConfig data;
  data.count = 1;
  data.seed = seed;
  data.resolution = 32;
  data.grid = 2;
  const Sample sample = generate_dataset(ontology, data).front();

  ModelConfig base;
  base.d = 8;
  base.heads = 2;
  base.grid_h = base.grid_w = 2;
  base.patch = 16;
  const ModelConfig config = ModelConfig::for_ontology(ontology, base);
  Rng rng = Rng::derive(seed, {0x30DE1});
  CoFormerWeights<double> weights = CoFormerWeights<double>::create(config, rng);
  const LossConfig loss;

  std::vector<NamedTensor> params;
  weights.visit([&](const std::string& name, TensorD& t, nn::ParamKind) { params.push_back({name, t}); });
  auto f = [&] {
    const TensorD x_f = embed_image(sample.image, weights.embedder).features;
    const auto out = full_forward(weights, config, ontology, x_f, sample.annotation.verb, {false, nullptr});
    return total_loss(compute_losses(out, sample.annotation, loss), loss);
  };
  return outcome("model_total_loss", grad_check_params(f, params, 1e-5, coords_per_param, seed), tol);
}

}  // namespace coformer
