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
#include <fstream>

#include "coformer/error.hpp"
#include "coformer/train.hpp"
#include "fixtures.hpp"

namespace coformer {
namespace {

Parameter scalar_param(float value, float grad, bool decay = true, bool backbone = false) {
  Parameter p;
  p.name = "w";
  p.tensor = TensorF({1}, {value}, true);
  p.tensor.mutable_grad()[0] = grad;
  p.decay = decay;
  p.backbone = backbone;
  return p;
}

TEST(AdamW, ZeroGradientZeroDecayLeavesWeights) {
  TrainConfig c;
  c.weight_decay = 0.0;
  std::vector<Parameter> ps = {scalar_param(0.7f, 0.0f)};
  AdamWState s;
  optimizer_step(ps, s, c, 1e-2, 1e-3);
  EXPECT_EQ(ps[0].tensor.at(0), 0.7f);
}

TEST(AdamW, DecayOnlyShrinksProportionally) {
  TrainConfig c;
  c.weight_decay = 0.5;
  std::vector<Parameter> ps = {scalar_param(2.0f, 0.0f), scalar_param(2.0f, 0.0f, false)};
  AdamWState s;
  optimizer_step(ps, s, c, 0.1, 0.1);
  EXPECT_FLOAT_EQ(ps[0].tensor.at(0), 2.0f * (1.0f - 0.1f * 0.5f));
  EXPECT_FLOAT_EQ(ps[1].tensor.at(0), 2.0f);
}

TEST(AdamW, MatchesScalarRecurrence) {
  TrainConfig c;
  c.weight_decay = 0.01;
  const double lr = 0.05;
  const std::vector<double> grads = {0.3, -0.1, 0.8, 0.05};
  std::vector<Parameter> ps = {scalar_param(1.5f, 0.0f)};
  AdamWState s;
  double w = 1.5, m = 0.0, v = 0.0;
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    ps[0].tensor.mutable_grad()[0] = static_cast<float>(grads[t - 1]);
    optimizer_step(ps, s, c, lr, 0.0);
    const double g = static_cast<float>(grads[t - 1]);
    w *= 1.0 - lr * c.weight_decay;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, static_cast<double>(t)));
    const double vh = v / (1.0 - std::pow(0.999, static_cast<double>(t)));
    w -= lr * mh / (std::sqrt(vh) + c.epsilon);
    EXPECT_NEAR(ps[0].tensor.at(0), w, 1e-6) << "step " << t;
  }
  EXPECT_EQ(s.step, grads.size());
}

TEST(AdamW, BackboneUsesItsOwnRate) {
  TrainConfig c;
  c.weight_decay = 0.0;
  std::vector<Parameter> ps = {scalar_param(0.0f, 1.0f, true, false), scalar_param(0.0f, 1.0f, true, true)};
  AdamWState s;
  optimizer_step(ps, s, c, 1e-2, 1e-3);
  EXPECT_NEAR(ps[0].tensor.at(0), -1e-2, 1e-7);
  EXPECT_NEAR(ps[1].tensor.at(0), -1e-3, 1e-8);
}

TEST(AdamW, NonFiniteGradientIsNamedAndNothingMoves) {
  TrainConfig c;
  std::vector<Parameter> ps = {scalar_param(1.0f, 0.5f), scalar_param(2.0f, NAN)};
  ps[1].name = "heads.box.0.weight";
  AdamWState s;
  try {
    optimizer_step(ps, s, c, 0.1, 0.1);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("heads.box.0.weight"), std::string::npos);
  }
  EXPECT_EQ(ps[0].tensor.at(0), 1.0f);
}

TEST(Clip, SmallNormUnchanged) {
  std::vector<Parameter> ps = {scalar_param(0.0f, 0.03f), scalar_param(0.0f, 0.04f)};
  EXPECT_NEAR(clip_gradients(ps, 0.1), 0.05, 1e-7);
  EXPECT_FLOAT_EQ(ps[0].tensor.grad()[0], 0.03f);
}

TEST(Clip, LargeNormScaledToCap) {
  std::vector<Parameter> ps = {scalar_param(0.0f, 0.6f), scalar_param(0.0f, 0.8f)};
  EXPECT_NEAR(clip_gradients(ps, 0.1), 1.0, 1e-6);
  EXPECT_NEAR(ps[0].tensor.grad()[0], 0.06f, 1e-7);
  EXPECT_NEAR(gradient_norm(ps), 0.1, 1e-7);
}

TEST(Clip, RandomGradientsNeverExceedCap) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Parameter> ps;
    for (int i = 0; i < 5; ++i) ps.push_back(scalar_param(0.0f, static_cast<float>(rng.normal(0.0, 2.0))));
    clip_gradients(ps, 0.1);
    EXPECT_LE(gradient_norm(ps), 0.1 + 1e-7);
  }
}

TEST(Schedule, DropsAtEpochBoundary) {
  TrainConfig c;
  const std::size_t spe = steps_per_epoch(64, 16);
  EXPECT_EQ(spe, 4u);
  EXPECT_EQ(steps_per_epoch(65, 16), 5u);
  EXPECT_DOUBLE_EQ(c.lr_main * lr_multiplier(c, 30 * spe - 1, spe), 1e-4);
  EXPECT_DOUBLE_EQ(c.lr_main * lr_multiplier(c, 30 * spe, spe), 1e-5);
  EXPECT_EQ(total_steps(c, 64), 160u);
  c.max_steps = 7;
  c.lr_drop_step = 5;
  EXPECT_EQ(total_steps(c, 64), 7u);
  EXPECT_DOUBLE_EQ(lr_multiplier(c, 4, spe), 1.0);
  EXPECT_DOUBLE_EQ(lr_multiplier(c, 5, spe), 0.1);
}

TEST(Parameters, GroupsAndDecayFlags) {
  const Ontology o = synthetic_ontology();
  Rng rng(4);
  auto w = CoFormerWeights<float>::create(testing::tiny_config(o), rng);
  const auto ps = collect_parameters(w);
  bool saw_backbone = false;
  for (const auto& p : ps) {
    EXPECT_EQ(p.backbone, p.name.rfind("backbone.", 0) == 0) << p.name;
    saw_backbone = saw_backbone || p.backbone;
    if (p.kind == nn::ParamKind::Bias || p.kind == nn::ParamKind::Norm) EXPECT_FALSE(p.decay) << p.name;
    if (p.kind == nn::ParamKind::Weight) EXPECT_TRUE(p.decay) << p.name;
  }
  EXPECT_TRUE(saw_backbone);
}

struct TrainerFixture : ::testing::Test {
  Ontology ontology = synthetic_ontology();
  ModelConfig model;
  TrainConfig train;
  std::vector<Sample> data;

  void SetUp() override {
    model = testing::tiny_config(ontology);
    model.block_dropout = 0.1;
    model.noun_head_dropout = 0.2;
    SyntheticConfig sc;
    sc.count = 8;
    sc.seed = 2;
    sc.grid = 4;
    sc.resolution = 32;
    data = generate_dataset(ontology, sc);
    train.batch_size = 4;
    train.max_steps = 12;
    train.seed = 9;
  }
};

TEST_F(TrainerFixture, SameSeedBitIdenticalLosses) {
  std::vector<std::string> runs[2];
  for (auto& run : runs) {
    Trainer t(ontology, model, train, LossConfig{});
    for (int i = 0; i < 10; ++i) run.push_back(t.step(data).to_json());
  }
  EXPECT_EQ(runs[0], runs[1]);
  Trainer other(ontology, model, [&] { auto c = train; c.seed = 10; return c; }(), LossConfig{});
  EXPECT_NE(other.step(data).to_json(), runs[0][0]);
}

TEST_F(TrainerFixture, ResumeMatchesContinuedRun) {
  testing::ScratchDir dir("resume");
  Trainer a(ontology, model, train, LossConfig{});
  for (int i = 0; i < 3; ++i) a.step(data);
  auto cp = a.checkpoint();
  save_checkpoint(dir / "mid", cp);
  std::vector<double> continued;
  for (int i = 0; i < 3; ++i) continued.push_back(a.step(data).loss.total);

  Trainer b(load_checkpoint(dir / "mid"));
  EXPECT_EQ(b.completed_steps(), 3u);
  for (int i = 0; i < 3; ++i) {
    const auto log = b.step(data);
    EXPECT_EQ(log.step, 4u + i);
    EXPECT_NEAR(log.loss.total, continued[i], 1e-5 * std::abs(continued[i]));
  }
}

TEST_F(TrainerFixture, CheckpointRoundTrip) {
  testing::ScratchDir dir("ckpt");
  Trainer t(ontology, model, train, LossConfig{});
  t.step(data);
  auto cp = t.checkpoint();
  save_checkpoint(dir / "c", cp);
  const Checkpoint back = load_checkpoint(dir / "c");
  EXPECT_TRUE(back.ontology == ontology);
  EXPECT_EQ(back.model, model);
  EXPECT_EQ(back.train, train);
  EXPECT_EQ(back.state.step, 1u);
  EXPECT_EQ(back.optimizer.step, 1u);
  EXPECT_EQ(back.optimizer.m, cp.optimizer.m);
  auto bw = back.weights;
  EXPECT_EQ(bw.parameter_count(), cp.weights.parameter_count());
  for (std::size_t i = 0; i < cp.weights.role_tokens.numel(); ++i)
    EXPECT_EQ(bw.role_tokens.values()[i], cp.weights.role_tokens.values()[i]);
}

TEST_F(TrainerFixture, CorruptCheckpointIsRejected) {
  testing::ScratchDir dir("corrupt");
  Trainer t(ontology, model, train, LossConfig{});
  auto cp = t.checkpoint();
  save_checkpoint(dir / "c", cp);
  {
    std::fstream f(dir / "c.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(10);
    f.put('\x7f');
  }
  EXPECT_THROW(load_checkpoint(dir / "c"), ValidationError);
  EXPECT_THROW(load_checkpoint(dir / "absent"), IoError);
}

TEST_F(TrainerFixture, RunWritesOneLogRecordPerStep) {
  testing::ScratchDir dir("run");
  Trainer t(ontology, model, train, LossConfig{});
  TrainOutputs out;
  out.directory = dir.path();
  std::size_t callbacks = 0;
  out.on_step = [&](const StepLog&) { ++callbacks; };
  const auto logs = t.run(data, &data, out);
  EXPECT_EQ(logs.size(), 12u);
  EXPECT_EQ(callbacks, 12u);
  std::ifstream in(dir / "loss_log.jsonl");
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  EXPECT_EQ(lines, 12u);
  EXPECT_TRUE(std::filesystem::exists(dir / "last.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "best.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "epoch_001.bin"));
}

TEST_F(TrainerFixture, EvaluationIsDeterministic) {
  Trainer t(ontology, model, train, LossConfig{});
  for (int i = 0; i < 4; ++i) t.step(data);
  const auto a = evaluate_model(t.weights(), model, ontology, data);
  const auto b = evaluate_model(t.weights(), model, ontology, data);
  EXPECT_EQ(a.report.to_json(), b.report.to_json());
  EXPECT_EQ(a.predictions, b.predictions);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = TrainConfig{};
  c.lr_main = -1.0;
  EXPECT_THROW(c.validate(), ValidationError);
}

}  // namespace
}  // namespace coformer
