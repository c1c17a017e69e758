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

// Microbenchmarks for the hot paths: matmul, attention, a full forward
// pass and one optimizer step of the toy model.

#include <benchmark/benchmark.h>

#include "coformer/dataset.hpp"
#include "coformer/model.hpp"
#include "coformer/nn.hpp"
#include "coformer/train.hpp"

namespace coformer {
namespace {

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const auto a = nn::normal_init<float>({n, n}, 1.0, rng);
  const auto b = nn::normal_init<float>({n, n}, 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b).values().data());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_Attention(benchmark::State& state) {
  const auto tokens = static_cast<std::size_t>(state.range(0));
  constexpr std::size_t kWidth = 64;
  Rng rng(2);
  const auto params = nn::AttentionParams<float>::create(kWidth, 4, rng);
  const auto x = nn::normal_init<float>({tokens, kWidth}, 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(nn::multi_head_attention(x, x, x, params).values().data());
}
BENCHMARK(BM_Attention)->Arg(17)->Arg(65)->Arg(257);

std::vector<Sample> bench_samples(const Ontology& o, std::size_t count) {
  SyntheticConfig sc;
  sc.count = count;
  sc.seed = 3;
  return generate_dataset(o, sc);
}

void BM_Forward(benchmark::State& state) {
  const Ontology o = synthetic_ontology();
  const ModelConfig c = ModelConfig::for_ontology(o);
  Rng rng(4);
  const auto w = CoFormerWeights<float>::create(c, rng);
  const auto s = bench_samples(o, 1).front();
  for (auto _ : state) benchmark::DoNotOptimize(predict(w, c, o, s.image, "bench").top_verbs.data());
}
BENCHMARK(BM_Forward)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const Ontology o = synthetic_ontology();
  const auto data = bench_samples(o, 64);
  TrainConfig tc;
  tc.max_steps = 1000000;
  Trainer trainer(o, ModelConfig::for_ontology(o), tc, LossConfig{});
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step(data).loss.total);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(tc.batch_size));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace coformer

BENCHMARK_MAIN();
