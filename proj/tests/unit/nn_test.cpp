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

#include <gtest/gtest.h>

#include <cmath>

#include "coformer/error.hpp"
#include "coformer/nn.hpp"

namespace coformer::nn {
namespace {

using Mat = std::vector<std::vector<double>>;

TensorD from_rows(const Mat& m) {
  std::vector<double> v;
  for (const auto& r : m) v.insert(v.end(), r.begin(), r.end());
  return TensorD({m.size(), m[0].size()}, std::move(v));
}

Mat to_rows(const TensorD& t) {
  Mat m(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t r = 0; r < t.dim(0); ++r)
    for (std::size_t c = 0; c < t.dim(1); ++c) m[r][c] = t.at(r, c);
  return m;
}

Mat mm(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

Mat plus(Mat a, const Mat& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[i][j];
  return a;
}

Mat ref_layer_norm(Mat x) {
  for (auto& r : x) {
    double mu = 0, var = 0;
    for (double v : r) mu += v;
    mu /= static_cast<double>(r.size());
    for (double v : r) var += (v - mu) * (v - mu);
    var /= static_cast<double>(r.size());
    for (double& v : r) v = (v - mu) / std::sqrt(var + kLayerNormEpsilon);
  }
  return x;
}

// Single-head attention with the block's projections.
Mat ref_attention(const Mat& q, const Mat& k, const Mat& v, const AttentionParams<double>& p) {
  const Mat qp = mm(q, to_rows(p.query)), kp = mm(k, to_rows(p.key)), vp = mm(v, to_rows(p.value));
  const double s = 1.0 / std::sqrt(static_cast<double>(qp[0].size()));
  Mat out(q.size(), std::vector<double>(vp[0].size(), 0.0));
  for (std::size_t i = 0; i < q.size(); ++i) {
    std::vector<double> w(k.size());
    double z = 0;
    for (std::size_t j = 0; j < k.size(); ++j) {
      double dot = 0;
      for (std::size_t c = 0; c < qp[i].size(); ++c) dot += qp[i][c] * kp[j][c];
      w[j] = std::exp(dot * s);
      z += w[j];
    }
    for (std::size_t j = 0; j < k.size(); ++j)
      for (std::size_t c = 0; c < vp[j].size(); ++c) out[i][c] += w[j] / z * vp[j][c];
  }
  return mm(out, to_rows(p.output));
}

Mat ref_linear(const Mat& x, const Linear<double>& l) {
  Mat y = mm(x, to_rows(l.weight));
  for (auto& r : y)
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += l.bias.at(j);
  return y;
}

TEST(Attention, IdenticalKeysGiveUniformWeights) {
  Rng rng(1);
  const auto params = AttentionParams<double>::create(8, 2, rng);
  Rng data(2);
  const TensorD q = normal_init<double>({3, 8}, 1.0, data);
  const TensorD row = normal_init<double>({1, 8}, 1.0, data);
  const TensorD k = concat<double>({row, row, row, row, row}, 0);
  const TensorD v = normal_init<double>({5, 8}, 1.0, data);
  AttentionRecorder rec;
  const AttentionProbe probe{&rec, "probe", 0};
  multi_head_attention(q, k, v, params, &probe);
  ASSERT_EQ(rec.maps.size(), 2u);
  for (const auto& m : rec.maps)
    for (double w : m.weights) EXPECT_NEAR(w, 0.2, 1e-12);
}

TEST(Attention, DominantKeySelectsItsValue) {
  AttentionParams<double> p;
  p.heads = 1;
  std::vector<double> eye(64, 0.0);
  for (std::size_t i = 0; i < 8; ++i) eye[i * 9] = 1.0;
  p.query = TensorD({8, 8}, eye);
  p.key = TensorD({8, 8}, eye);
  p.value = TensorD({8, 8}, eye);
  p.output = TensorD({8, 8}, eye);
  std::vector<double> qv(8, 0.0), kv(40, 0.0);
  qv[0] = 50.0;
  kv[2 * 8] = 1.0;
  Rng rng(3);
  const TensorD v = normal_init<double>({5, 8}, 1.0, rng);
  const auto out = multi_head_attention(TensorD({1, 8}, qv), TensorD({5, 8}, kv), v, p);
  for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(out.at(0, c), v.at(2, c), 1e-6);
}

TEST(Attention, ShapesAndRowNormalization) {
  Rng rng(4);
  const auto params = AttentionParams<double>::create(8, 2, rng);
  const TensorD q = normal_init<double>({3, 8}, 1.0, rng);
  const TensorD kv = normal_init<double>({5, 8}, 1.0, rng);
  AttentionRecorder rec;
  const AttentionProbe probe{&rec, "probe", 0};
  const auto out = multi_head_attention(q, kv, kv, params, &probe);
  EXPECT_EQ(out.shape(), (Shape{3, 8}));
  ASSERT_EQ(rec.maps.size(), 2u);
  for (const auto& m : rec.maps) {
    ASSERT_EQ(m.rows, 3u);
    ASSERT_EQ(m.cols, 5u);
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 5; ++c) s += m.weights[r * 5 + c];
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(Attention, RejectsIndivisibleHeads) {
  Rng rng(5);
  EXPECT_THROW(AttentionParams<double>::create(6, 4, rng), ValidationError);
}

void zero_out(TensorD& t) {
  for (auto& v : t.mutable_values()) v = 0.0;
}

TEST(Encoder, ZeroSublayersPreserveInput) {
  Rng rng(6);
  auto block = EncoderBlock<double>::create(8, 2, 0.0, rng);
  zero_out(block.self_attn.output);
  zero_out(block.ffn.contract.weight);
  zero_out(block.ffn.contract.bias);
  const TensorD x = normal_init<double>({4, 8}, 1.0, rng);
  const auto y = encoder_forward<double>(x, {block}, TensorD(), BlockContext{});
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_DOUBLE_EQ(y.values()[i], x.values()[i]);
}

TEST(Encoder, MatchesManualEvaluation) {
  Rng rng(7);
  const auto block = EncoderBlock<double>::create(2, 1, 0.0, rng);
  const Mat x = {{0.3, -1.2}, {0.8, 0.5}};
  const Mat pos = {{0.1, 0.2}, {-0.3, 0.4}};
  const auto got = encoder_forward<double>(from_rows(x), {block}, from_rows(pos), BlockContext{});

  const Mat n1 = ref_layer_norm(x);
  const Mat qk = plus(n1, pos);
  Mat h = plus(x, ref_attention(qk, qk, n1, block.self_attn));
  Mat hidden = ref_linear(ref_layer_norm(h), block.ffn.expand);
  for (auto& r : hidden)
    for (double& v : r) v = std::max(0.0, v);
  h = plus(h, ref_linear(hidden, block.ffn.contract));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(got.at(i, j), h[i][j], 1e-12);
}

TEST(Encoder, UnpositionedRowsArePermutationEquivariant) {
  Rng rng(8);
  std::vector<EncoderBlock<double>> blocks = {EncoderBlock<double>::create(8, 2, 0.0, rng),
                                              EncoderBlock<double>::create(8, 2, 0.0, rng)};
  const TensorD x = normal_init<double>({5, 8}, 1.0, rng);
  const auto y = encoder_forward<double>(x, blocks, TensorD(), BlockContext{});
  // Reverse the first four rows, keep the last (summary) row in place.
  std::vector<std::size_t> order = {3, 2, 1, 0, 4};
  const auto xp = embedding<double>(x, order);
  const auto yp = encoder_forward<double>(xp, blocks, TensorD(), BlockContext{});
  for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(yp.at(4, c), y.at(4, c), 1e-12);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(yp.at(r, c), y.at(order[r], c), 1e-12);
}

TEST(Decoder, SingleQuerySelfAttentionIsIdentityWeight) {
  Rng rng(9);
  const auto block = DecoderBlock<double>::create(8, 2, 0.0, rng);
  AttentionRecorder rec;
  BlockContext ctx;
  ctx.recorder = &rec;
  ctx.module = "dec";
  decoder_forward<double>(normal_init<double>({1, 8}, 1.0, rng), normal_init<double>({3, 8}, 1.0, rng), {block},
                          TensorD(), ctx);
  for (const auto& m : rec.maps) {
    if (m.module == "dec/self") {
      ASSERT_EQ(m.weights.size(), 1u);
      EXPECT_DOUBLE_EQ(m.weights[0], 1.0);
    }
  }
}

TEST(Decoder, ConstantMemoryIgnoresPositions) {
  Rng rng(10);
  const auto block = DecoderBlock<double>::create(16, 2, 0.0, rng);
  const TensorD q = normal_init<double>({4, 16}, 1.0, rng);
  const TensorD row = normal_init<double>({1, 16}, 1.0, rng);
  std::vector<TensorD> rows(9, row);
  const TensorD memory = concat(rows, 0);
  const TensorD positions = normal_init<double>({9, 16}, 1.0, rng);
  const auto with = decoder_forward<double>(q, memory, {block}, positions, BlockContext{});
  const auto without = decoder_forward<double>(q, memory, {block}, TensorD(), BlockContext{});
  EXPECT_EQ(with.shape(), (Shape{4, 16}));
  for (std::size_t i = 0; i < with.numel(); ++i) EXPECT_NEAR(with.values()[i], without.values()[i], 1e-12);
}

TEST(Decoder, EmptyQuerySetIsRejected) {
  Rng rng(11);
  const auto block = DecoderBlock<double>::create(8, 2, 0.0, rng);
  EXPECT_THROW(decoder_forward<double>(TensorD(), normal_init<double>({3, 8}, 1.0, rng), {block}, TensorD(),
                                       BlockContext{}),
               ShapeError);
}

TEST(Mlp, ZeroFinalLayerGivesSigmoidHalf) {
  Rng rng(12);
  auto head = Mlp<double>::create({8, 16, 16, 4}, 0.0, rng);
  zero_out(head.layers.back().weight);
  zero_out(head.layers.back().bias);
  const auto out = sigmoid(head.forward(normal_init<double>({3, 8}, 1.0, rng), false));
  for (double v : out.values()) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(Mlp, RejectsWrongInputWidth) {
  Rng rng(13);
  const auto head = Mlp<double>::create({8, 4}, 0.0, rng);
  EXPECT_THROW(head.forward(TensorD::zeros({1, 5}), false), ShapeError);
}

TEST(Positions, CellIsRowPlusColumn) {
  Rng rng(14);
  const auto pe = PositionalEncoding2D<double>::create(2, 3, 4, rng);
  const auto table = pe.forward();
  ASSERT_EQ(table.shape(), (Shape{6, 4}));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(table.at(i * 3 + j, c), pe.rows.at(i, c) + pe.cols.at(j, c));
}

}  // namespace
}  // namespace coformer::nn
