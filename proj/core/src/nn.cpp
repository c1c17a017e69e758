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

#include "coformer/nn.hpp"

#include <cmath>
#include <numeric>

#include "coformer/error.hpp"

namespace coformer::nn {

template <class T>
Tensor<T> xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<T> v(fan_in * fan_out);
  for (T& x : v) x = static_cast<T>(rng.uniform(-limit, limit));
  return Tensor<T>({fan_in, fan_out}, std::move(v), true);
}

template <class T>
Tensor<T> normal_init(Shape shape, double stddev, Rng& rng) {
  std::vector<T> v(shape_numel(shape));
  for (T& x : v) x = static_cast<T>(rng.normal(0.0, stddev));
  return Tensor<T>(std::move(shape), std::move(v), true);
}

// ---- Linear / LayerNorm ---------------------------------------------------

template <class T>
Linear<T> Linear<T>::create(std::size_t in, std::size_t out, Rng& rng) {
  return Linear{xavier_uniform<T>(in, out, rng), Tensor<T>::zeros({out}, true)};
}

template <class T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) const {
  return add(matmul(x, weight), bias);
}

template <class T>
void Linear<T>::visit(const std::string& prefix, const ParamVisitor<T>& visitor) {
  visitor(prefix + ".weight", weight, ParamKind::Weight);
  visitor(prefix + ".bias", bias, ParamKind::Bias);
}

template <class T>
LayerNorm<T> LayerNorm<T>::create(std::size_t d) {
  return LayerNorm{Tensor<T>::full({d}, T(1), true), Tensor<T>::zeros({d}, true)};
}

template <class T>
void LayerNorm<T>::visit(const std::string& prefix, const ParamVisitor<T>& visitor) {
  visitor(prefix + ".gain", gain, ParamKind::Norm);
  visitor(prefix + ".bias", bias, ParamKind::Norm);
}

// ---- attention ------------------------------------------------------------

template <class T>
AttentionParams<T> AttentionParams<T>::create(std::size_t d, std::size_t heads, Rng& rng) {
  if (heads == 0 || d % heads != 0) {
    throw ValidationError("attention: width " + std::to_string(d) + " not divisible by " + std::to_string(heads) +
                          " heads");
  }
  AttentionParams p;
  p.heads = heads;
  // Per-head Xavier bounds (fan d -> d_h) for the input projections.
  const std::size_t dh = d / heads;
  auto per_head = [&] {
    std::vector<T> v(d * d);
    const double limit = std::sqrt(6.0 / static_cast<double>(d + dh));
    for (T& x : v) x = static_cast<T>(rng.uniform(-limit, limit));
    return Tensor<T>({d, d}, std::move(v), true);
  };
  p.query = per_head();
  p.key = per_head();
  p.value = per_head();
  p.output = xavier_uniform<T>(d, d, rng);
  return p;
}

template <class T>
void AttentionParams<T>::visit(const std::string& prefix, const ParamVisitor<T>& visitor) {
  visitor(prefix + ".query", query, ParamKind::Weight);
  visitor(prefix + ".key", key, ParamKind::Weight);
  visitor(prefix + ".value", value, ParamKind::Weight);
  visitor(prefix + ".output", output, ParamKind::Weight);
}

template <class T>
Tensor<T> multi_head_attention(const Tensor<T>& queries, const Tensor<T>& keys, const Tensor<T>& values,
                               const AttentionParams<T>& params, const AttentionProbe* probe) {
  const std::size_t d = params.width();
  if (queries.rank() != 2 || keys.rank() != 2 || values.rank() != 2) {
    throw ShapeError("attention: expected rank-2 inputs, got Q " + shape_str(queries.shape()) + ", K " +
                     shape_str(keys.shape()) + ", V " + shape_str(values.shape()));
  }
  if (queries.dim(1) != d || keys.dim(1) != d || values.dim(1) != d) {
    throw ShapeError("attention: width " + std::to_string(d) + " does not match Q " + shape_str(queries.shape()) +
                     ", K " + shape_str(keys.shape()) + ", V " + shape_str(values.shape()));
  }
  if (keys.dim(0) != values.dim(0)) {
    throw ShapeError("attention: key rows " + shape_str(keys.shape()) + " differ from value rows " +
                     shape_str(values.shape()));
  }
  const Tensor<T> q = matmul(queries, params.query);
  const Tensor<T> k = matmul(keys, params.key);
  const Tensor<T> v = matmul(values, params.value);
  const std::size_t dh = params.head_width();
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

  std::vector<Tensor<T>> heads;
  heads.reserve(params.heads);
  for (std::size_t h = 0; h < params.heads; ++h) {
    const bool whole = params.heads == 1;
    const Tensor<T> qh = whole ? q : slice(q, 1, h * dh, (h + 1) * dh);
    const Tensor<T> kh = whole ? k : slice(k, 1, h * dh, (h + 1) * dh);
    const Tensor<T> vh = whole ? v : slice(v, 1, h * dh, (h + 1) * dh);
    const Tensor<T> weights = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), -1);
    if (probe != nullptr && probe->recorder != nullptr) {
      AttentionMap map;
      map.module = probe->module;
      map.layer = probe->layer;
      map.head = h;
      map.rows = weights.dim(0);
      map.cols = weights.dim(1);
      map.weights.assign(weights.values().begin(), weights.values().end());
      probe->recorder->maps.push_back(std::move(map));
    }
    heads.push_back(matmul(weights, vh));
  }
  const Tensor<T> joined = params.heads == 1 ? heads[0] : concat(heads, 1);
  return matmul(joined, params.output);
}

// ---- feed-forward and blocks ---------------------------------------------

template <class T>
FeedForward<T> FeedForward<T>::create(std::size_t d, std::size_t hidden, Rng& rng) {
  return FeedForward{Linear<T>::create(d, hidden, rng), Linear<T>::create(hidden, d, rng)};
}

template <class T>
void FeedForward<T>::visit(const std::string& prefix, const ParamVisitor<T>& visitor) {
  expand.visit(prefix + ".expand", visitor);
  contract.visit(prefix + ".contract", visitor);
}

template <class T>
EncoderBlock<T> EncoderBlock<T>::create(std::size_t d, std::size_t heads, double dropout, Rng& rng) {
  EncoderBlock b;
  b.attn_norm = LayerNorm<T>::create(d);
  b.self_attn = AttentionParams<T>::create(d, heads, rng);
  b.ffn_norm = LayerNorm<T>::create(d);
  b.ffn = FeedForward<T>::create(d, 4 * d, rng);
  b.dropout = dropout;
  return b;
}

template <class T>
void EncoderBlock<T>::visit(const std::string& prefix, const ParamVisitor<T>& visitor) {
  attn_norm.visit(prefix + ".attn_norm", visitor);
  self_attn.visit(prefix + ".self_attn", visitor);
  ffn_norm.visit(prefix + ".ffn_norm", visitor);
  ffn.visit(prefix + ".ffn", visitor);
}

template <class T>
DecoderBlock<T> DecoderBlock<T>::create(std::size_t d, std::size_t heads, double dropout, Rng& rng) {
  DecoderBlock b;
  b.self_norm = LayerNorm<T>::create(d);
  b.self_attn = AttentionParams<T>::create(d, heads, rng);
  b.cross_norm = LayerNorm<T>::create(d);
  b.cross_attn = AttentionParams<T>::create(d, heads, rng);
  b.ffn_norm = LayerNorm<T>::create(d);
  b.ffn = FeedForward<T>::create(d, 4 * d, rng);
  b.dropout = dropout;
  return b;
}

template <class T>
void DecoderBlock<T>::visit(const std::string& prefix, const ParamVisitor<T>& visitor) {
  self_norm.visit(prefix + ".self_norm", visitor);
  self_attn.visit(prefix + ".self_attn", visitor);
  cross_norm.visit(prefix + ".cross_norm", visitor);
  cross_attn.visit(prefix + ".cross_attn", visitor);
  ffn_norm.visit(prefix + ".ffn_norm", visitor);
  ffn.visit(prefix + ".ffn", visitor);
}

template <class T>
Tensor<T> encoder_forward(const Tensor<T>& x, const std::vector<EncoderBlock<T>>& blocks,
                          const Tensor<T>& positions, const BlockContext& ctx) {
  if (positions.defined() && positions.shape() != x.shape()) {
    throw ShapeError("encoder: positions " + shape_str(positions.shape()) + " do not match input " +
                     shape_str(x.shape()));
  }
  Tensor<T> h = x;
  for (std::size_t layer = 0; layer < blocks.size(); ++layer) {
    const auto& blk = blocks[layer];
    const AttentionProbe probe{ctx.recorder, ctx.module, layer};
    const Tensor<T> normed = blk.attn_norm.forward(h);
    const Tensor<T> qk = positions.defined() ? add(normed, positions) : normed;
    const Tensor<T> attended = multi_head_attention(qk, qk, normed, blk.self_attn, &probe);
    h = add(h, dropout(attended, blk.dropout, ctx.train));
    const Tensor<T> fed = blk.ffn.forward(blk.ffn_norm.forward(h));
    h = add(h, dropout(fed, blk.dropout, ctx.train));
  }
  return h;
}

template <class T>
Tensor<T> decoder_forward(const Tensor<T>& queries, const Tensor<T>& memory,
                          const std::vector<DecoderBlock<T>>& blocks, const Tensor<T>& memory_positions,
                          const BlockContext& ctx) {
  if (!queries.defined() || queries.rank() != 2) throw ShapeError("decoder: empty or malformed query set");
  if (memory_positions.defined() && memory_positions.shape() != memory.shape()) {
    throw ShapeError("decoder: memory positions " + shape_str(memory_positions.shape()) +
                     " do not match memory " + shape_str(memory.shape()));
  }
  const Tensor<T> memory_keys = memory_positions.defined() ? add(memory, memory_positions) : memory;
  Tensor<T> h = queries;
  for (std::size_t layer = 0; layer < blocks.size(); ++layer) {
    const auto& blk = blocks[layer];
    const AttentionProbe self_probe{ctx.recorder, ctx.module + "/self", layer};
    const AttentionProbe cross_probe{ctx.recorder, ctx.module + "/cross", layer};
    const Tensor<T> normed = blk.self_norm.forward(h);
    h = add(h, dropout(multi_head_attention(normed, normed, normed, blk.self_attn, &self_probe), blk.dropout,
                       ctx.train));
    const Tensor<T> cross_in = blk.cross_norm.forward(h);
    h = add(h, dropout(multi_head_attention(cross_in, memory_keys, memory, blk.cross_attn, &cross_probe),
                       blk.dropout, ctx.train));
    const Tensor<T> fed = blk.ffn.forward(blk.ffn_norm.forward(h));
    h = add(h, dropout(fed, blk.dropout, ctx.train));
  }
  return h;
}

// ---- positions and heads --------------------------------------------------

template <class T>
PositionalEncoding2D<T> PositionalEncoding2D<T>::create(std::size_t h, std::size_t w, std::size_t d, Rng& rng) {
  return PositionalEncoding2D{normal_init<T>({h, d}, 0.02, rng), normal_init<T>({w, d}, 0.02, rng)};
}

template <class T>
Tensor<T> PositionalEncoding2D<T>::forward() const {
  const std::size_t h = rows.dim(0), w = cols.dim(0);
  std::vector<std::size_t> row_idx(h * w), col_idx(h * w);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      row_idx[i * w + j] = i;
      col_idx[i * w + j] = j;
    }
  return add(embedding(rows, std::span<const std::size_t>(row_idx)),
             embedding(cols, std::span<const std::size_t>(col_idx)));
}

template <class T>
void PositionalEncoding2D<T>::visit(const std::string& prefix, const ParamVisitor<T>& visitor) {
  visitor(prefix + ".rows", rows, ParamKind::Embedding);
  visitor(prefix + ".cols", cols, ParamKind::Embedding);
}

template <class T>
Mlp<T> Mlp<T>::create(const std::vector<std::size_t>& widths, double dropout, Rng& rng) {
  if (widths.size() < 2) throw ValidationError("mlp: need at least input and output widths");
  Mlp m;
  m.dropout = dropout;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) m.layers.push_back(Linear<T>::create(widths[i], widths[i + 1], rng));
  return m;
}

template <class T>
Tensor<T> Mlp<T>::forward(const Tensor<T>& x, bool train) const {
  Tensor<T> h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i].forward(h);
    if (i + 1 < layers.size()) h = coformer::dropout(relu(h), this->dropout, train);
  }
  return h;
}

template <class T>
void Mlp<T>::visit(const std::string& prefix, const ParamVisitor<T>& visitor) {
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].visit(prefix + "." + std::to_string(i), visitor);
}

#define COFORMER_INSTANTIATE_NN(T)                                                                 \
  template Tensor<T> xavier_uniform<T>(std::size_t, std::size_t, Rng&);                            \
  template Tensor<T> normal_init<T>(Shape, double, Rng&);                                          \
  template struct Linear<T>;                                                                       \
  template struct LayerNorm<T>;                                                                    \
  template struct AttentionParams<T>;                                                              \
  template struct FeedForward<T>;                                                                  \
  template struct EncoderBlock<T>;                                                                 \
  template struct DecoderBlock<T>;                                                                 \
  template struct PositionalEncoding2D<T>;                                                         \
  template struct Mlp<T>;                                                                          \
  template Tensor<T> multi_head_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                          const AttentionParams<T>&, const AttentionProbe*);       \
  template Tensor<T> encoder_forward(const Tensor<T>&, const std::vector<EncoderBlock<T>>&,        \
                                     const Tensor<T>&, const BlockContext&);                       \
  template Tensor<T> decoder_forward(const Tensor<T>&, const Tensor<T>&,                           \
                                     const std::vector<DecoderBlock<T>>&, const Tensor<T>&,        \
                                     const BlockContext&);

COFORMER_INSTANTIATE_NN(float)
COFORMER_INSTANTIATE_NN(double)

}  // namespace coformer::nn
