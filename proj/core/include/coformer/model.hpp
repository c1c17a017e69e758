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

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "coformer/dataset.hpp"
#include "coformer/nn.hpp"
#include "coformer/ontology.hpp"
#include "coformer/tensor.hpp"

namespace coformer {

// Switches mirroring the ablation study. Each yields a structurally valid
// model; the defaults describe the full architecture.
struct Ablations {
  bool no_gaze_s1 = false;    // rl_feature = 0, no auxiliary noun losses
  bool no_gaze_s2 = false;    // nouns and boxes read from Gaze-S1 decoder features
  bool no_aux_noun = false;   // auxiliary classifiers dropped from the loss
  bool cut_grad_flow = false; // X_A detached before Gaze-S2
  bool no_verb_token = false; // q_r = w_r

  bool any() const { return no_gaze_s1 || no_gaze_s2 || no_aux_noun || cut_grad_flow || no_verb_token; }
  bool operator==(const Ablations&) const = default;
};

inline constexpr std::array<const char*, 5> kAblationNames = {"gaze_s1", "gaze_s2", "aux_noun", "grad_flow",
                                                              "verb_token"};

// Turns on the switch called `name`; unknown names throw ValidationError
// listing the valid ones.
void enable_ablation(Ablations& ablations, const std::string& name);
std::vector<std::string> ablation_names(const Ablations& ablations);

struct ModelConfig {
  std::size_t d = 64;
  std::size_t heads = 4;
  std::size_t glance_layers = 2;
  std::size_t gaze1_decoder_layers = 1;
  std::size_t gaze1_encoder_layers = 1;
  std::size_t gaze2_decoder_layers = 2;
  std::size_t grid_h = 8;
  std::size_t grid_w = 8;
  std::size_t patch = 8;
  double block_dropout = 0.15;
  double verb_head_dropout = 0.3;
  double noun_head_dropout = 0.3;
  double box_head_dropout = 0.2;
  double exist_head_dropout = 0.2;
  // Vocabulary sizes, filled from the ontology by for_ontology().
  std::size_t num_verbs = 0;
  std::size_t num_roles = 0;
  std::size_t noun_classes = 0;
  Ablations ablations;

  static ModelConfig for_ontology(const Ontology& ontology);
  static ModelConfig for_ontology(const Ontology& ontology, ModelConfig base);
  // d = 512, H = 8, 22 x 22 grid; documentation of the published scale.
  static ModelConfig paper_scale(const Ontology& ontology);

  std::size_t image_height() const { return grid_h * patch; }
  std::size_t image_width() const { return grid_w * patch; }
  std::size_t cells() const { return grid_h * grid_w; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

template <class T>
struct CoFormerWeights {
  PatchEmbedder<T> embedder;
  nn::PositionalEncoding2D<T> positions;
  Tensor<T> il_token;     // [1, d]
  Tensor<T> rl_token;     // [1, d]
  Tensor<T> role_tokens;  // [|R|, d], w_r
  Tensor<T> verb_tokens;  // [|V|, d], w_v
  std::vector<nn::EncoderBlock<T>> glance;
  std::vector<nn::DecoderBlock<T>> gaze1_decoder;
  std::vector<nn::EncoderBlock<T>> gaze1_encoder;
  std::vector<nn::DecoderBlock<T>> gaze2_decoder;
  nn::Mlp<T> verb_head;        // 2d -> 2d -> |V|
  nn::Linear<T> aux_decoder_noun;
  nn::Linear<T> aux_encoder_noun;
  nn::Mlp<T> noun_head;        // d -> 2d -> |N|+1
  nn::Mlp<T> box_head;         // d -> 2d -> 2d -> 4, then sigmoid
  nn::Mlp<T> exist_head;       // d -> 2d -> 1, then sigmoid

  static CoFormerWeights create(const ModelConfig& config, Rng& rng);
  // Visits every parameter with a stable dotted name. The patch embedder
  // lives under the "backbone." prefix.
  void visit(const nn::ParamVisitor<T>& visitor);
  std::size_t parameter_count();
};

// Converts between precisions, e.g. for gradient checks on trained weights.
template <class To, class From>
CoFormerWeights<To> cast_weights(CoFormerWeights<From>& weights, const ModelConfig& config);

struct ForwardOptions {
  bool train = false;
  nn::AttentionRecorder* recorder = nullptr;
};

template <class T>
struct GlanceOutput {
  Tensor<T> x_a;         // [hw, d]
  Tensor<T> il_feature;  // [1, d]
};

template <class T>
struct GazeS1Output {
  Tensor<T> rl_feature;             // [1, d]
  Tensor<T> decoder_role_features;  // [|R|, d]
  Tensor<T> encoder_role_features;  // [|R|, d]
};

template <class T>
struct GazeS2Output {
  Tensor<T> noun_logits;  // [|R_v|, |N|+1]
  Tensor<T> boxes;        // [|R_v|, 4] as (cx, cy, w, h)
  Tensor<T> box_exist;    // [|R_v|]
};

template <class T>
struct ForwardOutput {
  VerbId conditioning_verb = 0;
  Tensor<T> verb_logits;  // [|V|]
  Tensor<T> x_a;
  // Auxiliary classifiers over the conditioning verb's frame roles;
  // undefined under the Gaze-S1 or auxiliary ablations.
  Tensor<T> aux_decoder_logits;
  Tensor<T> aux_encoder_logits;
  GazeS2Output<T> gaze2;
};

template <class T>
Tensor<T> image_positions(const CoFormerWeights<T>& weights);

template <class T>
GlanceOutput<T> glance_forward(const CoFormerWeights<T>& weights, const Tensor<T>& x_f,
                               const ForwardOptions& options);

template <class T>
GazeS1Output<T> gaze_s1_forward(const CoFormerWeights<T>& weights, const Tensor<T>& x_f,
                                const ForwardOptions& options);

// FFN_Verb over concat(il_feature, rl_feature); returns [|V|] logits.
template <class T>
Tensor<T> predict_verb(const CoFormerWeights<T>& weights, const Tensor<T>& il_feature, const Tensor<T>& rl_feature,
                       const ForwardOptions& options);

// q_r = w_r + w_v for r in the frame of `verb`, in frame order.
template <class T>
Tensor<T> build_frame_role_queries(const CoFormerWeights<T>& weights, const Ontology& ontology, VerbId verb,
                                   bool use_verb_token = true);

template <class T>
GazeS2Output<T> gaze_s2_forward(const CoFormerWeights<T>& weights, const Tensor<T>& x_a, const Tensor<T>& queries,
                                const ForwardOptions& options);

// `teacher_verb` set = training mode conditioning; unset = condition on
// the top-1 prediction.
template <class T>
ForwardOutput<T> full_forward(const CoFormerWeights<T>& weights, const ModelConfig& config, const Ontology& ontology,
                              const Tensor<T>& x_f, std::optional<VerbId> teacher_verb,
                              const ForwardOptions& options);

// Indices of the k largest values, descending; ties go to the lower index.
template <class T>
std::vector<std::size_t> top_k(std::span<const T> values, std::size_t k);

// ---- inference records ------------------------------------------------------

inline constexpr std::size_t kTopVerbs = 5;

struct RolePrediction {
  NounId noun = 0;
  std::optional<Corners> box;  // predicted extent in corner form
  double exist = 0.0;          // p_b

  bool grounded() const { return box.has_value() && exist >= 0.5; }
  bool operator==(const RolePrediction&) const = default;
};

struct FramePrediction {
  VerbId verb = 0;
  std::vector<RolePrediction> roles;  // frame order of `verb`
  bool operator==(const FramePrediction&) const = default;
};

struct PredictionRecord {
  std::string image_id;
  std::vector<VerbId> top_verbs;        // ranked, distinct
  std::vector<FramePrediction> frames;  // one per conditioning verb

  const FramePrediction* frame_for(VerbId verb) const;
  bool operator==(const PredictionRecord&) const = default;
};

// Dropout-free inference. Frames are produced for every top verb and,
// when `gt_verb` is given and missing from the top list, for it as well.
PredictionRecord predict(const CoFormerWeights<float>& weights, const ModelConfig& config, const Ontology& ontology,
                         const Image& image, const std::string& image_id, std::optional<VerbId> gt_verb = {},
                         nn::AttentionRecorder* recorder = nullptr);

}  // namespace coformer
