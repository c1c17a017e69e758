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

#include "coformer/model.hpp"

#include <algorithm>
#include <numeric>

#include "coformer/error.hpp"

namespace coformer {

void enable_ablation(Ablations& a, const std::string& name) {
  if (name == "gaze_s1") {
    a.no_gaze_s1 = true;
  } else if (name == "gaze_s2") {
    a.no_gaze_s2 = true;
  } else if (name == "aux_noun") {
    a.no_aux_noun = true;
  } else if (name == "grad_flow") {
    a.cut_grad_flow = true;
  } else if (name == "verb_token") {
    a.no_verb_token = true;
  } else {
    std::string valid;
    for (const char* n : kAblationNames) valid += (valid.empty() ? "" : ", ") + std::string(n);
    throw ValidationError("unknown ablation \"" + name + "\"; valid names: " + valid);
  }
}

std::vector<std::string> ablation_names(const Ablations& a) {
  std::vector<std::string> out;
  if (a.no_gaze_s1) out.emplace_back("gaze_s1");
  if (a.no_gaze_s2) out.emplace_back("gaze_s2");
  if (a.no_aux_noun) out.emplace_back("aux_noun");
  if (a.cut_grad_flow) out.emplace_back("grad_flow");
  if (a.no_verb_token) out.emplace_back("verb_token");
  return out;
}

ModelConfig ModelConfig::for_ontology(const Ontology& ontology) { return for_ontology(ontology, ModelConfig{}); }

ModelConfig ModelConfig::for_ontology(const Ontology& ontology, ModelConfig base) {
  base.num_verbs = ontology.num_verbs();
  base.num_roles = ontology.num_roles();
  base.noun_classes = ontology.noun_classes();
  base.validate();
  return base;
}

ModelConfig ModelConfig::paper_scale(const Ontology& ontology) {
  ModelConfig c;
  c.d = 512;
  c.heads = 8;
  c.grid_h = c.grid_w = 22;
  c.patch = 32;
  return for_ontology(ontology, c);
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ValidationError("model config: " + m); };
  if (d == 0 || heads == 0) fail("d and heads must be positive");
  if (d % heads != 0) fail("d = " + std::to_string(d) + " is not divisible by heads = " + std::to_string(heads));
  if (grid_h == 0 || grid_w == 0 || patch == 0) fail("grid and patch must be positive");
  if (num_verbs == 0 || num_roles == 0 || noun_classes < 2) fail("vocabulary sizes are not set");
  for (double p : {block_dropout, verb_head_dropout, noun_head_dropout, box_head_dropout, exist_head_dropout}) {
    if (!(p >= 0.0 && p < 1.0)) fail("dropout rates must lie in [0, 1)");
  }
  if (ablations.no_gaze_s1 && ablations.no_gaze_s2) fail("cannot remove both Gaze-S1 and Gaze-S2");
}

template <class T>
CoFormerWeights<T> CoFormerWeights<T>::create(const ModelConfig& c, Rng& rng) {
  c.validate();
  const std::size_t d = c.d;
  CoFormerWeights w;
  w.embedder = PatchEmbedder<T>::create(c.patch, d, rng);
  w.positions = nn::PositionalEncoding2D<T>::create(c.grid_h, c.grid_w, d, rng);
  w.il_token = nn::normal_init<T>({1, d}, 0.02, rng);
  w.rl_token = nn::normal_init<T>({1, d}, 0.02, rng);
  w.role_tokens = nn::normal_init<T>({c.num_roles, d}, 0.02, rng);
  w.verb_tokens = nn::normal_init<T>({c.num_verbs, d}, 0.02, rng);
  for (std::size_t i = 0; i < c.glance_layers; ++i)
    w.glance.push_back(nn::EncoderBlock<T>::create(d, c.heads, c.block_dropout, rng));
  for (std::size_t i = 0; i < c.gaze1_decoder_layers; ++i)
    w.gaze1_decoder.push_back(nn::DecoderBlock<T>::create(d, c.heads, c.block_dropout, rng));
  for (std::size_t i = 0; i < c.gaze1_encoder_layers; ++i)
    w.gaze1_encoder.push_back(nn::EncoderBlock<T>::create(d, c.heads, c.block_dropout, rng));
  for (std::size_t i = 0; i < c.gaze2_decoder_layers; ++i)
    w.gaze2_decoder.push_back(nn::DecoderBlock<T>::create(d, c.heads, c.block_dropout, rng));
  w.verb_head = nn::Mlp<T>::create({2 * d, 2 * d, c.num_verbs}, c.verb_head_dropout, rng);
  w.aux_decoder_noun = nn::Linear<T>::create(d, c.noun_classes, rng);
  w.aux_encoder_noun = nn::Linear<T>::create(d, c.noun_classes, rng);
  w.noun_head = nn::Mlp<T>::create({d, 2 * d, c.noun_classes}, c.noun_head_dropout, rng);
  w.box_head = nn::Mlp<T>::create({d, 2 * d, 2 * d, 4}, c.box_head_dropout, rng);
  w.exist_head = nn::Mlp<T>::create({d, 2 * d, 1}, c.exist_head_dropout, rng);
  return w;
}

template <class T>
void CoFormerWeights<T>::visit(const nn::ParamVisitor<T>& v) {
  embedder.visit("backbone.embedder", v);
  positions.visit("positions", v);
  v("tokens.il", il_token, nn::ParamKind::Embedding);
  v("tokens.rl", rl_token, nn::ParamKind::Embedding);
  v("tokens.role", role_tokens, nn::ParamKind::Embedding);
  v("tokens.verb", verb_tokens, nn::ParamKind::Embedding);
  for (std::size_t i = 0; i < glance.size(); ++i) glance[i].visit("glance." + std::to_string(i), v);
  for (std::size_t i = 0; i < gaze1_decoder.size(); ++i)
    gaze1_decoder[i].visit("gaze_s1.decoder." + std::to_string(i), v);
  for (std::size_t i = 0; i < gaze1_encoder.size(); ++i)
    gaze1_encoder[i].visit("gaze_s1.encoder." + std::to_string(i), v);
  for (std::size_t i = 0; i < gaze2_decoder.size(); ++i)
    gaze2_decoder[i].visit("gaze_s2.decoder." + std::to_string(i), v);
  verb_head.visit("heads.verb", v);
  aux_decoder_noun.visit("heads.aux_decoder_noun", v);
  aux_encoder_noun.visit("heads.aux_encoder_noun", v);
  noun_head.visit("heads.noun", v);
  box_head.visit("heads.box", v);
  exist_head.visit("heads.exist", v);
}

template <class T>
std::size_t CoFormerWeights<T>::parameter_count() {
  std::size_t n = 0;
  visit([&](const std::string&, Tensor<T>& t, nn::ParamKind) { n += t.numel(); });
  return n;
}

template <class To, class From>
CoFormerWeights<To> cast_weights(CoFormerWeights<From>& weights, const ModelConfig& config) {
  Rng rng(0);
  CoFormerWeights<To> out = CoFormerWeights<To>::create(config, rng);
  std::vector<Tensor<From>> source;
  weights.visit([&](const std::string&, Tensor<From>& t, nn::ParamKind) { source.push_back(t); });
  std::size_t i = 0;
  out.visit([&](const std::string& name, Tensor<To>& t, nn::ParamKind) {
    if (i >= source.size() || source[i].shape() != t.shape()) {
      throw ShapeError("cast_weights: parameter \"" + name + "\" does not match the configuration");
    }
    t = cast<To>(source[i++].detach());
    t.set_requires_grad(true);
  });
  return out;
}

template <class T>
Tensor<T> image_positions(const CoFormerWeights<T>& w) {
  return w.positions.forward();
}

template <class T>
GlanceOutput<T> glance_forward(const CoFormerWeights<T>& w, const Tensor<T>& x_f, const ForwardOptions& o) {
  const std::size_t hw = x_f.dim(0), d = x_f.dim(1);
  const Tensor<T> pos = image_positions(w);
  if (pos.shape() != x_f.shape()) {
    throw ShapeError("glance: features " + shape_str(x_f.shape()) + " do not match the positional grid " +
                     shape_str(pos.shape()));
  }
  const Tensor<T> tokens = concat<T>({x_f, w.il_token}, 0);
  const Tensor<T> positions = concat<T>({pos, Tensor<T>::zeros({1, d})}, 0);
  const Tensor<T> out = nn::encoder_forward(tokens, w.glance, positions, {o.train, o.recorder, "glance"});
  return {slice(out, 0, 0, hw), slice(out, 0, hw, hw + 1)};
}

template <class T>
GazeS1Output<T> gaze_s1_forward(const CoFormerWeights<T>& w, const Tensor<T>& x_f, const ForwardOptions& o) {
  const std::size_t roles = w.role_tokens.dim(0);
  const Tensor<T> decoded =
      nn::decoder_forward(w.role_tokens, x_f, w.gaze1_decoder, image_positions(w), {o.train, o.recorder, "gaze_s1/decoder"});
  const Tensor<T> tokens = concat<T>({decoded, w.rl_token}, 0);
  const Tensor<T> encoded = nn::encoder_forward(tokens, w.gaze1_encoder, Tensor<T>{}, {o.train, o.recorder, "gaze_s1/encoder"});
  return {slice(encoded, 0, roles, roles + 1), decoded, slice(encoded, 0, 0, roles)};
}

template <class T>
Tensor<T> predict_verb(const CoFormerWeights<T>& w, const Tensor<T>& il, const Tensor<T>& rl,
                       const ForwardOptions& o) {
  const Tensor<T> joint = concat<T>({il, rl}, 1);
  const Tensor<T> logits = w.verb_head.forward(joint, o.train);
  return reshape(logits, {logits.numel()});
}

template <class T>
Tensor<T> build_frame_role_queries(const CoFormerWeights<T>& w, const Ontology& ontology, VerbId verb,
                                   bool use_verb_token) {
  if (verb >= ontology.num_verbs()) throw ValidationError("frame-role queries: unknown verb id " + std::to_string(verb));
  const auto frame = ontology.frame(verb);
  const Tensor<T> roles = embedding(w.role_tokens, frame);
  if (!use_verb_token) return roles;
  const std::size_t v[] = {verb};
  return add(roles, reshape(embedding(w.verb_tokens, std::span<const std::size_t>(v)), {w.verb_tokens.dim(1)}));
}

namespace {

template <class T>
GazeS2Output<T> run_heads(const CoFormerWeights<T>& w, const Tensor<T>& features, bool train) {
  GazeS2Output<T> out;
  out.noun_logits = w.noun_head.forward(features, train);
  out.boxes = sigmoid(w.box_head.forward(features, train));
  out.box_exist = reshape(sigmoid(w.exist_head.forward(features, train)), {features.dim(0)});
  return out;
}

}  // namespace

template <class T>
GazeS2Output<T> gaze_s2_forward(const CoFormerWeights<T>& w, const Tensor<T>& x_a, const Tensor<T>& queries,
                                const ForwardOptions& o) {
  if (!queries.defined() || queries.rank() != 2 || queries.dim(0) == 0) {
    throw ShapeError("gaze_s2: empty frame-role query set");
  }
  const Tensor<T> features =
      nn::decoder_forward(queries, x_a, w.gaze2_decoder, image_positions(w), {o.train, o.recorder, "gaze_s2/decoder"});
  return run_heads(w, features, o.train);
}

template <class T>
ForwardOutput<T> full_forward(const CoFormerWeights<T>& w, const ModelConfig& c, const Ontology& ontology,
                              const Tensor<T>& x_f, std::optional<VerbId> teacher_verb, const ForwardOptions& o) {
  const Ablations& ab = c.ablations;
  ForwardOutput<T> out;
  const GlanceOutput<T> glance = glance_forward(w, x_f, o);
  out.x_a = glance.x_a;
  GazeS1Output<T> s1;
  Tensor<T> rl;
  if (ab.no_gaze_s1) {
    rl = Tensor<T>::zeros({1, c.d});
  } else {
    s1 = gaze_s1_forward(w, x_f, o);
    rl = s1.rl_feature;
  }
  out.verb_logits = predict_verb(w, glance.il_feature, rl, o);
  out.conditioning_verb = teacher_verb ? *teacher_verb : top_k<T>(out.verb_logits.values(), 1).front();
  if (out.conditioning_verb >= ontology.num_verbs()) throw ValidationError("full_forward: verb id out of range");
  const auto frame = ontology.frame(out.conditioning_verb);

  if (!ab.no_gaze_s1 && !ab.no_aux_noun) {
    out.aux_decoder_logits = w.aux_decoder_noun.forward(embedding(s1.decoder_role_features, frame));
    out.aux_encoder_logits = w.aux_encoder_noun.forward(embedding(s1.encoder_role_features, frame));
  }
  if (ab.no_gaze_s2) {
    out.gaze2 = run_heads(w, embedding(s1.decoder_role_features, frame), o.train);
  } else {
    const Tensor<T> memory = ab.cut_grad_flow ? glance.x_a.detach() : glance.x_a;
    const Tensor<T> queries = build_frame_role_queries(w, ontology, out.conditioning_verb, !ab.no_verb_token);
    out.gaze2 = gaze_s2_forward(w, memory, queries, o);
  }
  return out;
}

template <class T>
std::vector<std::size_t> top_k(std::span<const T> values, std::size_t k) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  idx.resize(std::min(k, idx.size()));
  return idx;
}

const FramePrediction* PredictionRecord::frame_for(VerbId verb) const {
  for (const auto& f : frames)
    if (f.verb == verb) return &f;
  return nullptr;
}

PredictionRecord predict(const CoFormerWeights<float>& w, const ModelConfig& c, const Ontology& ontology,
                         const Image& image, const std::string& image_id, std::optional<VerbId> gt_verb,
                         nn::AttentionRecorder* recorder) {
  NoGrad<float> no_grad;
  const ForwardOptions o{false, recorder};
  const TensorF x_f = embed_image(image, w.embedder).features;
  const Ablations& ab = c.ablations;
  const GlanceOutput<float> glance = glance_forward(w, x_f, o);
  GazeS1Output<float> s1;
  TensorF rl = TensorF::zeros({1, c.d});
  if (!ab.no_gaze_s1) {
    s1 = gaze_s1_forward(w, x_f, o);
    rl = s1.rl_feature;
  }
  const TensorF logits = predict_verb(w, glance.il_feature, rl, o);

  PredictionRecord rec;
  rec.image_id = image_id;
  rec.top_verbs = top_k<float>(logits.values(), kTopVerbs);
  std::vector<VerbId> conditioning = rec.top_verbs;
  if (gt_verb && std::find(conditioning.begin(), conditioning.end(), *gt_verb) == conditioning.end()) {
    conditioning.push_back(*gt_verb);
  }
  // Only the first pass over Gaze-S2 is recorded.
  ForwardOptions s2_options = o;
  for (VerbId v : conditioning) {
    const auto frame = ontology.frame(v);
    GazeS2Output<float> g;
    if (ab.no_gaze_s2) {
      g = run_heads(w, embedding(s1.decoder_role_features, frame), false);
    } else {
      g = gaze_s2_forward(w, glance.x_a, build_frame_role_queries(w, ontology, v, !ab.no_verb_token), s2_options);
    }
    s2_options.recorder = nullptr;
    FramePrediction fp;
    fp.verb = v;
    const std::size_t classes = g.noun_logits.dim(1);
    auto nl = g.noun_logits.values();
    for (std::size_t k = 0; k < frame.size(); ++k) {
      RolePrediction r;
      r.noun = top_k<float>(nl.subspan(k * classes, classes), 1).front();
      const Box b{g.boxes.at(k, 0), g.boxes.at(k, 1), g.boxes.at(k, 2), g.boxes.at(k, 3)};
      r.box = b.corners();
      r.exist = g.box_exist.at(k);
      fp.roles.push_back(r);
    }
    rec.frames.push_back(std::move(fp));
  }
  return rec;
}

#define COFORMER_INSTANTIATE_MODEL(T)                                                                   \
  template struct CoFormerWeights<T>;                                                                   \
  template Tensor<T> image_positions(const CoFormerWeights<T>&);                                        \
  template GlanceOutput<T> glance_forward(const CoFormerWeights<T>&, const Tensor<T>&, const ForwardOptions&); \
  template GazeS1Output<T> gaze_s1_forward(const CoFormerWeights<T>&, const Tensor<T>&, const ForwardOptions&); \
  template Tensor<T> predict_verb(const CoFormerWeights<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                  const ForwardOptions&);                                               \
  template Tensor<T> build_frame_role_queries(const CoFormerWeights<T>&, const Ontology&, VerbId, bool); \
  template GazeS2Output<T> gaze_s2_forward(const CoFormerWeights<T>&, const Tensor<T>&, const Tensor<T>&, \
                                           const ForwardOptions&);                                      \
  template ForwardOutput<T> full_forward(const CoFormerWeights<T>&, const ModelConfig&, const Ontology&, \
                                         const Tensor<T>&, std::optional<VerbId>, const ForwardOptions&); \
  template std::vector<std::size_t> top_k(std::span<const T>, std::size_t);

COFORMER_INSTANTIATE_MODEL(float)
COFORMER_INSTANTIATE_MODEL(double)

template CoFormerWeights<double> cast_weights(CoFormerWeights<float>&, const ModelConfig&);
template CoFormerWeights<float> cast_weights(CoFormerWeights<double>&, const ModelConfig&);
template CoFormerWeights<float> cast_weights(CoFormerWeights<float>&, const ModelConfig&);

}  // namespace coformer
