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

#include "coformer/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <tuple>

#include "coformer/error.hpp"

namespace coformer {

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ValidationError("train config: " + m); };
  if (!(lr_main > 0) || !(lr_backbone > 0)) fail("learning rates must be positive");
  if (!(weight_decay >= 0)) fail("weight decay must be non-negative");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) fail("betas must lie in [0, 1)");
  if (!(epsilon > 0) || !(clip_norm > 0)) fail("epsilon and clip norm must be positive");
  if (batch_size == 0 || epochs == 0) fail("batch size and epochs must be positive");
  if (lr_drop_epoch > epochs) fail("lr_drop_epoch exceeds epochs");
  if (!(lr_drop_factor > 0 && lr_drop_factor <= 1)) fail("lr_drop_factor must lie in (0, 1]");
}

std::vector<Parameter> collect_parameters(CoFormerWeights<float>& weights) {
  std::vector<Parameter> out;
  weights.visit([&](const std::string& name, TensorF& t, nn::ParamKind kind) {
    Parameter p;
    p.name = name;
    p.tensor = t;
    p.kind = kind;
    p.backbone = name.rfind("backbone.", 0) == 0;
    p.decay = kind != nn::ParamKind::Bias && kind != nn::ParamKind::Norm;
    out.push_back(std::move(p));
  });
  return out;
}

double gradient_norm(const std::vector<Parameter>& params) {
  double sq = 0.0;
  for (const auto& p : params)
    for (float g : p.tensor.grad()) sq += static_cast<double>(g) * g;
  return std::sqrt(sq);
}

double clip_gradients(std::vector<Parameter>& params, double max_norm) {
  if (!(max_norm > 0)) throw ValidationError("clip_gradients: max_norm must be positive");
  const double norm = gradient_norm(params);
  if (norm > max_norm) {
    const auto factor = static_cast<float>(max_norm / norm);
    for (auto& p : params)
      if (p.tensor.has_grad())
        for (float& g : p.tensor.mutable_grad()) g *= factor;
  }
  return norm;
}

void optimizer_step(std::vector<Parameter>& params, AdamWState& state, const TrainConfig& c, double lr_main,
                    double lr_backbone) {
  for (const auto& p : params) {
    for (float g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericalError("non-finite gradient in parameter \"" + p.name + "\"");
    }
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor.numel(), 0.0f);
      state.v.emplace_back(p.tensor.numel(), 0.0f);
    }
  }
  if (state.m.size() != params.size()) throw ValidationError("optimizer state does not match the parameter list");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const double lr = p.backbone ? lr_backbone : lr_main;
    const double shrink = p.decay ? 1.0 - lr * c.weight_decay : 1.0;
    auto w = p.tensor.mutable_values();
    auto grad = p.tensor.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double g = grad.empty() ? 0.0 : grad[k];
      const double mk = c.beta1 * m[k] + (1.0 - c.beta1) * g;
      const double vk = c.beta2 * v[k] + (1.0 - c.beta2) * g * g;
      m[k] = static_cast<float>(mk);
      v[k] = static_cast<float>(vk);
      const double update = (mk / bc1) / (std::sqrt(vk / bc2) + c.epsilon);
      w[k] = static_cast<float>(w[k] * shrink - lr * update);
    }
  }
}

std::size_t steps_per_epoch(std::size_t n, std::size_t batch) {
  if (n == 0) throw ValidationError("training set is empty");
  return (n + batch - 1) / batch;
}

std::size_t total_steps(const TrainConfig& c, std::size_t n) {
  return c.max_steps != 0 ? c.max_steps : c.epochs * steps_per_epoch(n, c.batch_size);
}

double lr_multiplier(const TrainConfig& c, std::size_t step, std::size_t spe) {
  const bool dropped = c.lr_drop_step != 0 ? step >= c.lr_drop_step : step / spe >= c.lr_drop_epoch;
  return dropped ? c.lr_drop_factor : 1.0;
}

std::string StepLog::to_json() const {
  char head[160];
  std::snprintf(head, sizeof(head), "{\"step\":%zu,\"epoch\":%zu,\"lr\":%.17g,\"grad_norm\":%.17g,", step, epoch, lr,
                grad_norm);
  char body[512];
  std::snprintf(body, sizeof(body),
                "\"verb\":%.17g,\"noun1\":%.17g,\"noun2\":%.17g,\"noun3\":%.17g,\"box_exist\":%.17g,\"l1\":%.17g,"
                "\"giou\":%.17g,\"total\":%.17g}",
                loss.verb, loss.noun1, loss.noun2, loss.noun3, loss.box_exist, loss.l1, loss.giou, loss.total);
  return std::string(head) + body;
}

EvalResult evaluate_model(const CoFormerWeights<float>& weights, const ModelConfig& config, const Ontology& ontology,
                          const std::vector<Sample>& samples) {
  EvalResult r;
  std::vector<GroundedAnnotation> annotations;
  for (const auto& s : samples) {
    r.predictions.push_back(predict(weights, config, ontology, s.image, s.annotation.image_id, s.annotation.verb));
    annotations.push_back(s.annotation);
  }
  r.report = evaluate(r.predictions, annotations, ontology);
  return r;
}

Trainer::Trainer(Ontology ontology, ModelConfig model, TrainConfig train, LossConfig loss)
    : ontology_(std::move(ontology)), model_(model), train_(train), loss_(loss) {
  model_ = ModelConfig::for_ontology(ontology_, model_);
  train_.validate();
  loss_.validate();
  Rng init = Rng::derive(train_.seed, {0x1417});
  weights_ = CoFormerWeights<float>::create(model_, init);
  state_.dropout_seed = Rng::derive(train_.seed, {0xD40F}).next_u64();
  init_parameters();
}

Trainer::Trainer(Checkpoint cp)
    : ontology_(std::move(cp.ontology)),
      model_(cp.model),
      train_(cp.train),
      loss_(cp.loss),
      weights_(std::move(cp.weights)),
      optimizer_(std::move(cp.optimizer)),
      state_(cp.state) {
  model_.validate();
  train_.validate();
  loss_.validate();
  init_parameters();
}

void Trainer::init_parameters() { params_ = collect_parameters(weights_); }

Checkpoint Trainer::checkpoint() const {
  return Checkpoint{ontology_, model_, train_, loss_, weights_, optimizer_, state_};
}

StepLog Trainer::step(const std::vector<Sample>& data) {
  const std::size_t n = data.size();
  const std::size_t spe = steps_per_epoch(n, train_.batch_size);
  const std::size_t s = state_.step;
  const std::size_t epoch = s / spe, pos = s % spe;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle = Rng::derive(train_.seed, {0x5EED, epoch});
  shuffle.shuffle(order);
  const std::size_t begin = pos * train_.batch_size, end = std::min(n, begin + train_.batch_size);
  const double mult = lr_multiplier(train_, s, spe);

  for (auto& p : params_) p.tensor.clear_grad();
  Tape<float> tape;
  tape.set_rng(Rng(state_.dropout_seed, state_.dropout_counter));
  LossReport mean_report;
  {
    ActiveTape<float> scope(tape);
    TensorF batch_loss;
    const double inv = 1.0 / static_cast<double>(end - begin);
    for (std::size_t j = begin; j < end; ++j) {
      const Sample& sample = data[order[j]];
      Image image = sample.image;
      GroundedAnnotation annotation = sample.annotation;
      if (train_.augment) {
        std::tie(image, annotation) =
            augment(image, annotation, Rng::derive(train_.seed, {0xA06, s, j}).next_u64());
      }
      const TensorF x_f = embed_image(image, weights_.embedder).features;
      const ForwardOutput<float> out = full_forward(weights_, model_, ontology_, x_f, annotation.verb, {true, nullptr});
      const LossTerms<float> terms = compute_losses(out, annotation, loss_);
      const TensorF total = total_loss(terms, loss_);
      batch_loss = batch_loss.defined() ? add(batch_loss, total) : total;
      const LossReport r = report_losses(terms, loss_);
      mean_report.verb += inv * r.verb;
      mean_report.noun1 += inv * r.noun1;
      mean_report.noun2 += inv * r.noun2;
      mean_report.noun3 += inv * r.noun3;
      mean_report.box_exist += inv * r.box_exist;
      mean_report.l1 += inv * r.l1;
      mean_report.giou += inv * r.giou;
      mean_report.total += inv * r.total;
    }
    batch_loss = scale(batch_loss, static_cast<float>(inv));
    if (!std::isfinite(batch_loss.item())) {
      throw NumericalError("non-finite loss at step " + std::to_string(s + 1) + "; last checkpoint kept");
    }
    tape.backward(batch_loss);
  }
  StepLog log;
  log.grad_norm = clip_gradients(params_, train_.clip_norm);
  optimizer_step(params_, optimizer_, train_, train_.lr_main * mult, train_.lr_backbone * mult);
  state_.dropout_counter = tape.rng().counter();
  state_.step = s + 1;
  log.step = state_.step;
  log.epoch = epoch;
  log.lr = train_.lr_main * mult;
  log.loss = mean_report;
  return log;
}

std::vector<StepLog> Trainer::run(const std::vector<Sample>& train, const std::vector<Sample>* dev,
                                  const TrainOutputs& outputs) {
  const std::size_t total = total_steps(train_, train.size());
  const std::size_t spe = steps_per_epoch(train.size(), train_.batch_size);
  const std::size_t every = std::max<std::size_t>(1, outputs.checkpoint_every);
  const bool keep = !outputs.directory.empty();
  std::ofstream log_file;
  if (keep) {
    std::filesystem::create_directories(outputs.directory);
    log_file.open(outputs.directory / "loss_log.jsonl", std::ios::app);
    if (!log_file) throw IoError("cannot write " + (outputs.directory / "loss_log.jsonl").string());
  }
  std::vector<StepLog> logs;
  while (state_.step < total) {
    StepLog log = step(train);
    if (keep) log_file << log.to_json() << '\n' << std::flush;
    if (outputs.on_step) outputs.on_step(log);
    logs.push_back(log);

    const bool epoch_end = state_.step % spe == 0 || state_.step == total;
    const std::size_t epoch = (state_.step - 1) / spe;
    if (!epoch_end || ((epoch + 1) % every != 0 && state_.step != total)) continue;
    bool improved = false;
    if (dev != nullptr && !dev->empty()) {
      const double acc = *evaluate_model(weights_, model_, ontology_, *dev).report.at(Setting::Top1).verb;
      if (acc > state_.best_dev_verb) {
        state_.best_dev_verb = acc;
        improved = true;
      }
    }
    if (!keep) continue;
    Checkpoint cp = checkpoint();
    if (outputs.keep_epoch_checkpoints) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%03zu", epoch + 1);
      save_checkpoint(outputs.directory / name, cp);
    }
    save_checkpoint(outputs.directory / "last", cp);
    if (improved) save_checkpoint(outputs.directory / "best", cp);
  }
  return logs;
}

}  // namespace coformer
