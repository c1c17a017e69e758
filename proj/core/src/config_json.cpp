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

#include "coformer/config.hpp"

#include <algorithm>

#include "coformer/error.hpp"
#include "json.hpp"

namespace coformer {

namespace {

using ojson = nlohmann::ordered_json;

// Binds JSON keys to struct members in both directions.
class Fields {
 public:
  explicit Fields(const ojson* in) : in_(in) {}

  template <class V>
  void bind(const char* key, V& member) {
    known_.emplace_back(key);
    if (in_ == nullptr) {
      out_[key] = member;
      return;
    }
    if (!in_->contains(key)) return;
    try {
      member = in_->at(key).get<V>();
    } catch (const ojson::exception& e) {
      throw ValidationError(std::string("config key \"") + key + "\": " + e.what());
    }
  }

  void finish(const char* what) const {
    if (in_ == nullptr) return;
    if (!in_->is_object()) throw ValidationError(std::string(what) + " config must be a JSON object");
    for (const auto& [key, _] : in_->items()) {
      if (std::find(known_.begin(), known_.end(), key) == known_.end()) {
        throw ValidationError(std::string(what) + " config: unknown key \"" + key + "\"");
      }
    }
  }

  const ojson& out() const { return out_; }

 private:
  const ojson* in_;
  ojson out_ = ojson::object();
  std::vector<std::string> known_;
};

void bind(Fields& f, ModelConfig& c) {
  f.bind("d", c.d);
  f.bind("heads", c.heads);
  f.bind("glance_layers", c.glance_layers);
  f.bind("gaze1_decoder_layers", c.gaze1_decoder_layers);
  f.bind("gaze1_encoder_layers", c.gaze1_encoder_layers);
  f.bind("gaze2_decoder_layers", c.gaze2_decoder_layers);
  f.bind("grid_h", c.grid_h);
  f.bind("grid_w", c.grid_w);
  f.bind("patch", c.patch);
  f.bind("block_dropout", c.block_dropout);
  f.bind("verb_head_dropout", c.verb_head_dropout);
  f.bind("noun_head_dropout", c.noun_head_dropout);
  f.bind("box_head_dropout", c.box_head_dropout);
  f.bind("exist_head_dropout", c.exist_head_dropout);
  f.bind("num_verbs", c.num_verbs);
  f.bind("num_roles", c.num_roles);
  f.bind("noun_classes", c.noun_classes);
  f.bind("no_gaze_s1", c.ablations.no_gaze_s1);
  f.bind("no_gaze_s2", c.ablations.no_gaze_s2);
  f.bind("no_aux_noun", c.ablations.no_aux_noun);
  f.bind("cut_grad_flow", c.ablations.cut_grad_flow);
  f.bind("no_verb_token", c.ablations.no_verb_token);
}

void bind(Fields& f, TrainConfig& c) {
  f.bind("lr_main", c.lr_main);
  f.bind("lr_backbone", c.lr_backbone);
  f.bind("weight_decay", c.weight_decay);
  f.bind("beta1", c.beta1);
  f.bind("beta2", c.beta2);
  f.bind("epsilon", c.epsilon);
  f.bind("clip_norm", c.clip_norm);
  f.bind("batch_size", c.batch_size);
  f.bind("epochs", c.epochs);
  f.bind("lr_drop_epoch", c.lr_drop_epoch);
  f.bind("lr_drop_factor", c.lr_drop_factor);
  f.bind("max_steps", c.max_steps);
  f.bind("lr_drop_step", c.lr_drop_step);
  f.bind("augment", c.augment);
  f.bind("seed", c.seed);
}

void bind(Fields& f, LossConfig& c) {
  f.bind("verb", c.verb);
  f.bind("noun1", c.noun1);
  f.bind("noun2", c.noun2);
  f.bind("noun3", c.noun3);
  f.bind("box_exist", c.box_exist);
  f.bind("l1", c.l1);
  f.bind("giou", c.giou);
  f.bind("verb_smoothing", c.verb_smoothing);
  f.bind("noun_smoothing", c.noun_smoothing);
}

void bind(Fields& f, SyntheticConfig& c) {
  f.bind("count", c.count);
  f.bind("seed", c.seed);
  f.bind("grid", c.grid);
  f.bind("resolution", c.resolution);
  f.bind("empty_box_fraction", c.empty_box_fraction);
  f.bind("synonym_probability", c.synonym_probability);
}

template <class C>
std::string dump(C config) {
  Fields f(nullptr);
  bind(f, config);
  return f.out().dump();
}

template <class C>
C parse(std::string_view text, C base, const char* what) {
  ojson doc;
  try {
    doc = ojson::parse(text);
  } catch (const ojson::parse_error& e) {
    throw ValidationError(std::string(what) + " config: malformed JSON: " + e.what());
  }
  Fields f(&doc);
  bind(f, base);
  f.finish(what);
  return base;
}

}  // namespace

std::string to_json(const ModelConfig& c) { return dump(c); }
std::string to_json(const TrainConfig& c) { return dump(c); }
std::string to_json(const LossConfig& c) { return dump(c); }
std::string to_json(const SyntheticConfig& c) { return dump(c); }

ModelConfig model_config_from_json(std::string_view t, ModelConfig base) { return parse(t, base, "model"); }
TrainConfig train_config_from_json(std::string_view t, TrainConfig base) { return parse(t, base, "train"); }
LossConfig loss_config_from_json(std::string_view t, LossConfig base) { return parse(t, base, "loss"); }
SyntheticConfig synthetic_config_from_json(std::string_view t, SyntheticConfig base) {
  return parse(t, base, "synthetic");
}

}  // namespace coformer
