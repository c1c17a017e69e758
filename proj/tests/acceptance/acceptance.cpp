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

// Acceptance runner: one PASS/FAIL line per criterion, REPORT for the
// non-gating ablation comparison. Exit status is nonzero when a gating
// criterion fails. Criterion numbers given on the command line restrict
// the run to those criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "brute_force.hpp"
#include "coformer/diagnostics.hpp"
#include "coformer/eval.hpp"
#include "coformer/losses.hpp"
#include "coformer/model.hpp"
#include "coformer/train.hpp"
#include "fixtures.hpp"

namespace coformer {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Verdict {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

// ---- 1 ----------------------------------------------------------------------

Verdict gradient_soundness() {
  const auto start = Clock::now();
  double prim = 0.0, loss = 0.0;
  bool ok = true;
  std::string worst;
  for (const auto& c : primitive_gradchecks(0, 1e-4)) {
    ok = ok && c.passed;
    if (c.max_rel_error >= prim) {
      prim = c.max_rel_error;
      worst = c.name;
    }
  }
  const auto losses = loss_gradchecks(0, 1e-4);
  for (const auto& c : losses) {
    ok = ok && c.passed;
    loss = std::max(loss, c.max_rel_error);
  }
  const auto model = model_gradcheck(0, 1e-3, 0);
  ok = ok && model.passed && losses.size() == 7;
  const double elapsed = seconds_since(start);
  ok = ok && elapsed < 120.0;
  return {ok, "primitives max " + fmt("%.2e", prim) + " (" + worst + "), 7 loss terms max " + fmt("%.2e", loss) +
                  ", full model " + fmt("%.2e", model.max_rel_error) + " over all coordinates, " +
                  fmt("%.1f", elapsed) + " s"};
}

// ---- 2 ----------------------------------------------------------------------

Verdict metric_oracle() {
  const Ontology o = synthetic_ontology();
  double worst = 0.0;
  std::size_t numbers = 0;
  for (std::uint64_t fixture = 0; fixture < 5; ++fixture) {
    Rng rng = Rng::derive(2024, {fixture});
    std::vector<GroundedAnnotation> anns;
    std::vector<PredictionRecord> preds;
    for (std::size_t i = 0; i < 20; ++i) {
      anns.push_back(testing::random_annotation(o, rng, "f" + std::to_string(fixture) + "_" + std::to_string(i)));
      preds.push_back(testing::noisy_prediction(anns.back(), o, rng));
    }
    const auto got = evaluate(preds, anns, o).numbers();
    const auto want = testing::brute_force_metrics(preds, anns, o);
    if (got.size() != 14 || want.size() != 14) return {false, "metric vector is not 14 long"};
    for (std::size_t k = 0; k < 14; ++k) worst = std::max(worst, std::abs(got[k] - want[k]));
    numbers += got.size();
  }
  return {worst <= 1e-9, std::to_string(numbers) + " numbers over 5 fixtures, max deviation " + fmt("%.2e", worst)};
}

// ---- 3 ----------------------------------------------------------------------

Verdict box_geometry() {
  const double e1 = std::abs(giou({0, 0, 1, 1}, {2, 2, 3, 3}) + 7.0 / 9.0);
  const double e2 = std::abs(giou({0, 0, 2, 2}, {1, 1, 3, 3}) + 5.0 / 63.0);
  const double e3 = std::abs(iou({0, 0, 2, 2}, {1, 1, 3, 3}) - 1.0 / 7.0);
  const double worked = std::max({e1, e2, e3});
  Rng rng(33);
  std::size_t violations = 0;
  for (int i = 0; i < 10000; ++i) {
    const Corners a = testing::random_corners(rng), b = testing::random_corners(rng);
    const double g = giou(a, b), u = iou(a, b);
    if (std::abs(g - giou(b, a)) > 1e-12) ++violations;
    if (g > u + 1e-12) ++violations;
    if (!(g > -1.0 && g <= 1.0)) ++violations;
    if (std::abs(giou(a, a) - 1.0) > 1e-12) ++violations;
  }
  return {worked <= 1e-9 && violations == 0,
          "worked examples max error " + fmt("%.1e", worked) + ", " + std::to_string(violations) +
              " property violations on 10000 pairs"};
}

// ---- 4 ----------------------------------------------------------------------

double max_abs_diff(const TensorD& a, const TensorD& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

double glance_gradient(bool cut) {
  const Ontology o = synthetic_ontology();
  ModelConfig c = testing::without_dropout(ModelConfig::for_ontology(o));
  c.ablations.cut_grad_flow = cut;
  Rng rng(44);
  auto w = CoFormerWeights<double>::create(c, rng);
  SyntheticConfig sc;
  sc.count = 1;
  const auto s = generate_dataset(o, sc).front();
  Tape<double> tape;
  ActiveTape<double> scope(tape);
  const auto x_f = embed_image(s.image, w.embedder).features;
  const auto out = full_forward(w, c, o, x_f, s.annotation.verb, {});
  const auto t = compute_losses(out, s.annotation, LossConfig{});
  tape.backward(add(add(t.noun3, t.box_exist), add(t.l1, t.giou)));
  double mass = 0.0;
  for (auto& b : w.glance)
    b.visit("glance", [&](const std::string&, TensorD& p, nn::ParamKind) {
      if (p.has_grad())
        for (double g : p.grad()) mass += std::abs(g);
    });
  return mass;
}

Verdict architecture() {
  const Ontology o = synthetic_ontology();
  const ModelConfig c = testing::without_dropout(ModelConfig::for_ontology(o));
  Rng rng(41);
  auto w = CoFormerWeights<double>::create(c, rng);
  SyntheticConfig sc;
  sc.count = 1;
  sc.seed = 9;
  const auto s = generate_dataset(o, sc).front();
  const auto x_f = embed_image(s.image, w.embedder).features;

  // Permutation invariance of the RL feature.
  const auto base = gaze_s1_forward(w, x_f, {});
  std::vector<std::size_t> perm(o.num_roles());
  std::iota(perm.begin(), perm.end(), 0);
  Rng prng(42);
  double perm_err = 0.0;
  for (int t = 0; t < 100; ++t) {
    prng.shuffle(perm);
    CoFormerWeights<double> p = w;
    p.role_tokens = embedding(w.role_tokens, std::span<const std::size_t>(perm));
    perm_err = std::max(perm_err, max_abs_diff(gaze_s1_forward(p, x_f, {}).rl_feature, base.rl_feature));
  }

  // Verb head reads exactly concat(IL, RL).
  const auto g = glance_forward(w, x_f, {});
  const bool head_width = w.verb_head.layers.front().in_features() == 2 * c.d;
  const auto logits = predict_verb(w, g.il_feature, base.rl_feature, {});
  const auto direct = reshape(w.verb_head.forward(concat<double>({g.il_feature, base.rl_feature}, 1), false),
                              {o.num_verbs()});
  const double head_err = max_abs_diff(logits, direct);

  // q_r = w_r + w_v: additivity in each table, checked per verb.
  double query_err = 0.0;
  for (VerbId v = 0; v < o.num_verbs(); ++v) {
    const auto q = build_frame_role_queries(w, o, v);
    const auto frame = o.frame(v);
    for (std::size_t k = 0; k < frame.size(); ++k)
      for (std::size_t j = 0; j < c.d; ++j)
        query_err = std::max(query_err, std::abs(q.at(k, j) - w.role_tokens.at(frame[k], j) - w.verb_tokens.at(v, j)));
  }
  CoFormerWeights<double> shifted = w;
  shifted.verb_tokens = scale(w.verb_tokens, 3.0);
  for (VerbId v = 0; v < o.num_verbs(); ++v) {
    const auto q0 = build_frame_role_queries(w, o, v), q3 = build_frame_role_queries(shifted, o, v);
    const auto bare = build_frame_role_queries(w, o, v, false);
    // q(3 w_v) - q(w_v) = 2 (q(w_v) - w_r)
    for (std::size_t i = 0; i < q0.numel(); ++i)
      query_err = std::max(query_err, std::abs((q3.values()[i] - q0.values()[i]) - 2.0 * (q0.values()[i] - bare.values()[i])));
  }

  const double flow_on = glance_gradient(false), flow_off = glance_gradient(true);
  const bool ok = perm_err <= 1e-5 && head_width && head_err < 1e-12 && query_err < 1e-12 && flow_on > 0.0 &&
                  flow_off == 0.0;
  return {ok, "RL permutation drift " + fmt("%.1e", perm_err) + " over 100 permutations, verb head input " +
                  std::to_string(w.verb_head.layers.front().in_features()) + " = 2d, query linearity error " +
                  fmt("%.1e", query_err) + ", Glance grad from grounding losses " + fmt("%.3e", flow_on) +
                  " -> " + fmt("%.1e", flow_off) + " when cut"};
}

// ---- 5 ----------------------------------------------------------------------

struct LearnOutcome {
  std::size_t steps = 0;
  double verb = 0, value = 0;
  std::vector<double> window_means;
  double seconds = 0;
};

LearnOutcome learn(std::size_t max_steps, std::size_t check_every) {
  const Ontology o = synthetic_ontology();
  SyntheticConfig sc;
  sc.count = 64;
  sc.seed = 5;
  const auto data = generate_dataset(o, sc);
  TrainConfig tc;
  tc.lr_main = 1e-3;
  tc.lr_backbone = 1e-4;
  tc.max_steps = max_steps;
  tc.seed = 1;
  Trainer trainer(o, ModelConfig::for_ontology(o), tc, LossConfig{});
  LearnOutcome r;
  const auto start = Clock::now();
  double window = 0.0;
  while (trainer.completed_steps() < max_steps) {
    window += trainer.step(data).loss.total;
    const std::size_t done = trainer.completed_steps();
    if (done % check_every != 0) continue;
    r.window_means.push_back(window / static_cast<double>(check_every));
    window = 0.0;
    const auto eval = evaluate_model(trainer.weights(), trainer.model_config(), o, data);
    r.steps = done;
    r.verb = *eval.report.at(Setting::Top1).verb;
    r.value = eval.report.at(Setting::GtVerb).value;
    if (r.verb >= 95.0 && r.value >= 90.0) break;
  }
  r.seconds = seconds_since(start);
  return r;
}

Verdict learnability() {
  const auto r = learn(2000, 100);
  bool decreasing = r.window_means.size() >= 2;
  for (std::size_t i = 1; i < r.window_means.size(); ++i) decreasing = decreasing && r.window_means[i] < r.window_means[i - 1];
  std::string trace;
  for (double m : r.window_means) trace += (trace.empty() ? "" : " ") + fmt("%.2f", m);
  const bool ok = r.verb >= 95.0 && r.value >= 90.0 && r.seconds < 600.0 && decreasing;
  return {ok, "step " + std::to_string(r.steps) + ": Top-1 verb " + fmt("%.1f", r.verb) + ", GT-Verb value " +
                  fmt("%.1f", r.value) + ", " + fmt("%.0f", r.seconds) + " s; 100-step loss means [" + trace + "]" +
                  (decreasing ? " strictly decreasing" : " NOT strictly decreasing")};
}

// ---- 6 ----------------------------------------------------------------------

Verdict determinism() {
  const Ontology o = synthetic_ontology();
  SyntheticConfig sc;
  sc.count = 32;
  sc.seed = 6;
  const auto data = generate_dataset(o, sc);
  TrainConfig tc;
  tc.max_steps = 20;
  tc.seed = 3;
  std::vector<std::string> logs[2];
  std::string reports[2];
  for (int run = 0; run < 2; ++run) {
    Trainer t(o, ModelConfig::for_ontology(o), tc, LossConfig{});
    for (int i = 0; i < 10; ++i) logs[run].push_back(t.step(data).to_json());
    reports[run] = evaluate_model(t.weights(), t.model_config(), o, data).report.to_json();
  }
  const bool same = logs[0] == logs[1] && reports[0] == reports[1];

  testing::ScratchDir dir("acceptance_resume");
  Trainer a(o, ModelConfig::for_ontology(o), tc, LossConfig{});
  for (int i = 0; i < 5; ++i) a.step(data);
  auto cp = a.checkpoint();
  save_checkpoint(dir / "mid", cp);
  Trainer b(load_checkpoint(dir / "mid"));
  double worst = 0.0;
  for (int i = 0; i < 5; ++i) {
    const double x = a.step(data).loss.total, y = b.step(data).loss.total;
    worst = std::max(worst, std::abs(x - y) / std::max(std::abs(x), 1e-12));
  }
  return {same && worst <= 1e-5, std::string(same ? "identical" : "DIFFERENT") +
                                     " 10-step loss logs and eval reports, resume relative gap " + fmt("%.1e", worst)};
}

// ---- 7 ----------------------------------------------------------------------

PredictionRecord grounded_record(const Ontology& o, std::vector<VerbId> verbs) {
  PredictionRecord p;
  p.image_id = "r";
  p.top_verbs = verbs;
  for (VerbId v : verbs) {
    FramePrediction f;
    f.verb = v;
    for (std::size_t k = 0; k < o.frame(v).size(); ++k) f.roles.push_back({k % o.num_nouns(), Corners{0.2, 0.1, 0.6, 0.7}, 0.9});
    p.frames.push_back(f);
  }
  return p;
}

Verdict retrieval() {
  const Ontology o = synthetic_ontology();
  const auto same = grounded_record(o, {0, 1, 2, 3, 4});
  const double h1 = grsitsim(same, same, o);
  const double h2 = grsitsim(grounded_record(o, {0, 1, 2, 3, 11}), grounded_record(o, {5, 6, 7, 8, 11}), o);
  const double h3 = grsitsim(grounded_record(o, {0, 1, 2, 3, 4}), grounded_record(o, {5, 6, 7, 8, 9}), o);
  const bool hand = h1 == 2.0 && std::abs(h2 - 2.0 / 25.0) < 1e-15 && h3 == 0.0;
  Rng rng(77);
  std::size_t violations = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto a = testing::noisy_prediction(testing::random_annotation(o, rng, "a"), o, rng);
    const auto b = testing::noisy_prediction(testing::random_annotation(o, rng, "b"), o, rng);
    const double s = grsitsim(a, b, o);
    if (s != grsitsim(b, a, o) || s < 0.0 || s > 2.0) ++violations;
  }
  return {hand && violations == 0, "identical " + fmt("%.6g", h1) + ", rank-5 match " + fmt("%.6g", h2) +
                                       " (2/25), disjoint " + fmt("%.6g", h3) + ", " + std::to_string(violations) +
                                       " violations on 1000 pairs"};
}

// ---- 8 ----------------------------------------------------------------------

struct AblationScore {
  double verb = 0, grounded = 0;
};

AblationScore ablation_run(const std::vector<Sample>& train, const std::vector<Sample>& dev, const char* ablation,
                           std::uint64_t seed, std::size_t steps) {
  const Ontology o = synthetic_ontology();
  ModelConfig mc = ModelConfig::for_ontology(o);
  if (ablation != nullptr) enable_ablation(mc.ablations, ablation);
  TrainConfig tc;
  tc.lr_main = 1e-3;
  tc.lr_backbone = 1e-4;
  tc.max_steps = steps;
  tc.seed = seed;
  Trainer t(o, mc, tc, LossConfig{});
  while (t.completed_steps() < steps) t.step(train);
  const auto r = evaluate_model(t.weights(), mc, o, dev).report;
  return {*r.at(Setting::Top1).verb, r.at(Setting::GtVerb).grounded_value};
}

Verdict ablation_direction() {
  const Ontology o = synthetic_ontology();
  SyntheticConfig sc;
  sc.count = 256;
  sc.seed = 81;
  const auto train = generate_dataset(o, sc);
  sc.count = 64;
  sc.seed = 82;
  const auto dev = generate_dataset(o, sc);
  constexpr std::size_t kSteps = 500;
  AblationScore full, no_s1, no_s2;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto f = ablation_run(train, dev, nullptr, seed, kSteps);
    const auto a = ablation_run(train, dev, "gaze_s1", seed, kSteps);
    const auto b = ablation_run(train, dev, "gaze_s2", seed, kSteps);
    full.verb += f.verb / 3;
    full.grounded += f.grounded / 3;
    no_s1.verb += a.verb / 3;
    no_s1.grounded += a.grounded / 3;
    no_s2.verb += b.verb / 3;
    no_s2.grounded += b.grounded / 3;
  }
  const bool s1 = no_s1.verb < full.verb, s2 = no_s2.grounded < full.grounded;
  return {s1 && s2, "3 seeds x " + std::to_string(kSteps) + " steps on 256 images, 64-image dev Top-1 verb full " + fmt("%.1f", full.verb) +
                        " vs w/o Gaze-S1 " + fmt("%.1f", no_s1.verb) + (s1 ? " (lower)" : " (not lower)") +
                        "; dev GT-Verb grnd-value full " + fmt("%.1f", full.grounded) + " vs w/o Gaze-S2 " +
                        fmt("%.1f", no_s2.grounded) + (s2 ? " (lower)" : " (not lower)")};
}

struct Criterion {
  int id;
  const char* name;
  bool gating;
  std::function<Verdict()> check;
};

}  // namespace
}  // namespace coformer

int main(int argc, char** argv) {
  using namespace coformer;
  const std::vector<Criterion> criteria = {
      {1, "gradient soundness", true, gradient_soundness},
      {2, "metric oracle equivalence", true, metric_oracle},
      {3, "GIoU/IoU correctness", true, box_geometry},
      {4, "architectural invariants", true, architecture},
      {5, "learnability smoke test", true, learnability},
      {6, "determinism and resume", true, determinism},
      {7, "retrieval similarity", true, retrieval},
      {8, "ablation directionality", false, ablation_direction},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && only.count(c.id) == 0) continue;
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const char* tag = c.gating ? (v.passed ? "PASS" : "FAIL") : "REPORT";
    std::printf("%s %d %s: %s%s\n", tag, c.id, c.name, v.detail.c_str(),
                c.gating ? "" : (v.passed ? " [direction holds]" : " [direction does not hold]"));
    std::fflush(stdout);
    if (c.gating && !v.passed) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
