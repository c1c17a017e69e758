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

// Transformer building blocks: multi-head attention, pre-LN encoder and
// decoder blocks, learnable 2D positional tables and small MLP heads.
// Parameters live in plain structs; forward passes are free functions so
// frozen weights can be shared across threads during evaluation.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "coformer/rng.hpp"
#include "coformer/tensor.hpp"

namespace coformer::nn {

enum class ParamKind { Weight, Bias, Norm, Embedding };

template <class T>
using ParamVisitor = std::function<void(const std::string& name, Tensor<T>& tensor, ParamKind kind)>;

template <class T>
Tensor<T> xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);
template <class T>
Tensor<T> normal_init(Shape shape, double stddev, Rng& rng);

// y = x W + b with W of shape [in, out].
template <class T>
struct Linear {
  Tensor<T> weight;
  Tensor<T> bias;

  static Linear create(std::size_t in, std::size_t out, Rng& rng);
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
  Tensor<T> forward(const Tensor<T>& x) const;
  void visit(const std::string& prefix, const ParamVisitor<T>& visitor);
};

template <class T>
struct LayerNorm {
  Tensor<T> gain;
  Tensor<T> bias;

  static LayerNorm create(std::size_t d);
  Tensor<T> forward(const Tensor<T>& x) const { return layer_norm(x, gain, bias); }
  void visit(const std::string& prefix, const ParamVisitor<T>& visitor);
};

// Head i owns column block [i*d_h, (i+1)*d_h) of query/key/value, i.e. the
// per-head d x d_h projections stored side by side. No projection biases.
template <class T>
struct AttentionParams {
  Tensor<T> query;
  Tensor<T> key;
  Tensor<T> value;
  Tensor<T> output;
  std::size_t heads = 1;

  static AttentionParams create(std::size_t d, std::size_t heads, Rng& rng);
  std::size_t width() const { return query.dim(0); }
  std::size_t head_width() const { return width() / heads; }
  void visit(const std::string& prefix, const ParamVisitor<T>& visitor);
};

// Row-major softmax weights of one head, kept for diagnostics.
struct AttentionMap {
  std::string module;
  std::size_t layer = 0;
  std::size_t head = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> weights;
};

struct AttentionRecorder {
  std::vector<AttentionMap> maps;
};

struct AttentionProbe {
  AttentionRecorder* recorder = nullptr;
  std::string module;
  std::size_t layer = 0;
};

template <class T>
Tensor<T> multi_head_attention(const Tensor<T>& queries, const Tensor<T>& keys, const Tensor<T>& values,
                               const AttentionParams<T>& params, const AttentionProbe* probe = nullptr);

template <class T>
struct FeedForward {
  Linear<T> expand;
  Linear<T> contract;

  static FeedForward create(std::size_t d, std::size_t hidden, Rng& rng);
  Tensor<T> forward(const Tensor<T>& x) const { return contract.forward(relu(expand.forward(x))); }
  void visit(const std::string& prefix, const ParamVisitor<T>& visitor);
};

template <class T>
struct EncoderBlock {
  LayerNorm<T> attn_norm;
  AttentionParams<T> self_attn;
  LayerNorm<T> ffn_norm;
  FeedForward<T> ffn;
  double dropout = 0.0;

  static EncoderBlock create(std::size_t d, std::size_t heads, double dropout, Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor<T>& visitor);
};

template <class T>
struct DecoderBlock {
  LayerNorm<T> self_norm;
  AttentionParams<T> self_attn;
  LayerNorm<T> cross_norm;
  AttentionParams<T> cross_attn;
  LayerNorm<T> ffn_norm;
  FeedForward<T> ffn;
  double dropout = 0.0;

  static DecoderBlock create(std::size_t d, std::size_t heads, double dropout, Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor<T>& visitor);
};

struct BlockContext {
  bool train = false;
  AttentionRecorder* recorder = nullptr;
  std::string module;
};

// Self-attention stack. `positions` (undefined = none) is added to queries
// and keys only; rows without a spatial position carry zeros.
template <class T>
Tensor<T> encoder_forward(const Tensor<T>& x, const std::vector<EncoderBlock<T>>& blocks,
                          const Tensor<T>& positions, const BlockContext& ctx);

// Self-attention over `queries`, then cross-attention into `memory` with
// `memory_positions` added to the memory keys only.
template <class T>
Tensor<T> decoder_forward(const Tensor<T>& queries, const Tensor<T>& memory,
                          const std::vector<DecoderBlock<T>>& blocks, const Tensor<T>& memory_positions,
                          const BlockContext& ctx);

// Learnable row and column tables; cell (i, j) gets row[i] + col[j], rows
// flattened in row-major cell order to match the flattened feature grid.
template <class T>
struct PositionalEncoding2D {
  Tensor<T> rows;
  Tensor<T> cols;

  static PositionalEncoding2D create(std::size_t h, std::size_t w, std::size_t d, Rng& rng);
  Tensor<T> forward() const;
  void visit(const std::string& prefix, const ParamVisitor<T>& visitor);
};

// Fully connected layers with ReLU and dropout between them; the last
// layer is linear.
template <class T>
struct Mlp {
  std::vector<Linear<T>> layers;
  double dropout = 0.0;

  static Mlp create(const std::vector<std::size_t>& widths, double dropout, Rng& rng);
  Tensor<T> forward(const Tensor<T>& x, bool train) const;
  void visit(const std::string& prefix, const ParamVisitor<T>& visitor);
};

}  // namespace coformer::nn
