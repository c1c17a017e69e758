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
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "coformer/dataset.hpp"
#include "coformer/eval.hpp"
#include "coformer/losses.hpp"
#include "coformer/model.hpp"

namespace coformer {

struct TrainConfig {
  double lr_main = 1e-4;
  double lr_backbone = 1e-5;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 0.1;
  std::size_t batch_size = 16;
  std::size_t epochs = 40;
  std::size_t lr_drop_epoch = 30;
  double lr_drop_factor = 0.1;
  // Step-counted overrides for small datasets; 0 keeps the epoch values.
  std::size_t max_steps = 0;
  std::size_t lr_drop_step = 0;
  bool augment = true;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct Parameter {
  std::string name;
  TensorF tensor;
  nn::ParamKind kind = nn::ParamKind::Weight;
  bool backbone = false;
  bool decay = true;  // false for biases and layer-norm parameters
};

std::vector<Parameter> collect_parameters(CoFormerWeights<float>& weights);

struct AdamWState {
  std::size_t step = 0;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
};

double gradient_norm(const std::vector<Parameter>& params);
// Scales all gradients by max_norm / norm when the global L2 norm exceeds
// max_norm. Returns the norm before clipping.
double clip_gradients(std::vector<Parameter>& params, double max_norm);

// Decoupled weight decay, then the bias-corrected adaptive update. Throws
// NumericalError naming the first parameter with a non-finite gradient,
// before touching any weight.
void optimizer_step(std::vector<Parameter>& params, AdamWState& state, const TrainConfig& config, double lr_main,
                    double lr_backbone);

std::size_t steps_per_epoch(std::size_t dataset_size, std::size_t batch_size);
std::size_t total_steps(const TrainConfig& config, std::size_t dataset_size);
// Multiplier applied to both base rates before `step` (0-based).
double lr_multiplier(const TrainConfig& config, std::size_t step, std::size_t steps_per_epoch);

struct StepLog {
  std::size_t step = 0;  // 1-based index of the completed step
  std::size_t epoch = 0;
  double lr = 0;
  double grad_norm = 0;
  LossReport loss;
  std::string to_json() const;
};

struct TrainState {
  std::size_t step = 0;  // completed steps
  std::uint64_t dropout_seed = 0;
  std::uint64_t dropout_counter = 0;
  double best_dev_verb = -1.0;
};

struct Checkpoint {
  Ontology ontology;
  ModelConfig model;
  TrainConfig train;
  LossConfig loss;
  CoFormerWeights<float> weights;
  AdamWState optimizer;
  TrainState state;
};

// Writes `<prefix>.json` (configuration, ontology, tensor directory and
// training state) and `<prefix>.bin` (little-endian float32 values).
void save_checkpoint(const std::filesystem::path& prefix, Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& prefix);

// Dropout-free predictions and metrics for a labelled sample set.
struct EvalResult {
  std::vector<PredictionRecord> predictions;
  MetricReport report;
};
EvalResult evaluate_model(const CoFormerWeights<float>& weights, const ModelConfig& config, const Ontology& ontology,
                          const std::vector<Sample>& samples);

struct TrainOutputs {
  std::filesystem::path directory;  // empty = keep nothing on disk
  std::function<void(const StepLog&)> on_step;
  // Dev evaluation and checkpoints every this many epochs (and at the end).
  std::size_t checkpoint_every = 1;
  bool keep_epoch_checkpoints = true;
};

class Trainer {
 public:
  Trainer(Ontology ontology, ModelConfig model, TrainConfig train, LossConfig loss);
  explicit Trainer(Checkpoint checkpoint);

  // Runs the next scheduled step on `data`.
  StepLog step(const std::vector<Sample>& data);
  // Trains until total_steps(). Checkpoints `epoch_NNN`, `last` and `best`
  // (by dev Top-1 verb accuracy) after every epoch; appends loss_log.jsonl.
  std::vector<StepLog> run(const std::vector<Sample>& train, const std::vector<Sample>* dev,
                           const TrainOutputs& outputs);

  Checkpoint checkpoint() const;
  const CoFormerWeights<float>& weights() const { return weights_; }
  CoFormerWeights<float>& weights() { return weights_; }
  const ModelConfig& model_config() const { return model_; }
  const TrainConfig& train_config() const { return train_; }
  const Ontology& ontology() const { return ontology_; }
  std::size_t completed_steps() const { return state_.step; }

 private:
  void init_parameters();

  Ontology ontology_;
  ModelConfig model_;
  TrainConfig train_;
  LossConfig loss_;
  CoFormerWeights<float> weights_;
  std::vector<Parameter> params_;
  AdamWState optimizer_;
  TrainState state_;
};

}  // namespace coformer
