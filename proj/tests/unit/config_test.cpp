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

#include "coformer/config.hpp"
#include "coformer/error.hpp"

namespace coformer {
namespace {

TEST(ConfigJson, DefaultsRoundTrip) {
  const ModelConfig m;
  EXPECT_EQ(model_config_from_json(to_json(m)), m);
  const TrainConfig t;
  EXPECT_EQ(train_config_from_json(to_json(t)), t);
  const LossConfig l;
  EXPECT_EQ(loss_config_from_json(to_json(l)), l);
  const SyntheticConfig s;
  const auto back = synthetic_config_from_json(to_json(s));
  EXPECT_EQ(back.count, s.count);
  EXPECT_EQ(back.resolution, s.resolution);
}

TEST(ConfigJson, PartialOverridesKeepBase) {
  TrainConfig base;
  base.batch_size = 3;
  const auto t = train_config_from_json(R"({"lr_main": 0.001})", base);
  EXPECT_DOUBLE_EQ(t.lr_main, 1e-3);
  EXPECT_EQ(t.batch_size, 3u);
  EXPECT_DOUBLE_EQ(t.lr_backbone, 1e-5);
}

TEST(ConfigJson, PaperDefaults) {
  const TrainConfig t;
  EXPECT_DOUBLE_EQ(t.lr_main, 1e-4);
  EXPECT_DOUBLE_EQ(t.lr_backbone, 1e-5);
  EXPECT_DOUBLE_EQ(t.weight_decay, 1e-4);
  EXPECT_DOUBLE_EQ(t.clip_norm, 0.1);
  EXPECT_EQ(t.batch_size, 16u);
  EXPECT_EQ(t.epochs, 40u);
  EXPECT_EQ(t.lr_drop_epoch, 30u);
  const LossConfig l;
  EXPECT_DOUBLE_EQ(l.verb_smoothing, 0.3);
  EXPECT_DOUBLE_EQ(l.noun_smoothing, 0.2);
}

TEST(ConfigJson, UnknownKeysAndBadTypesAreRejected) {
  EXPECT_THROW(train_config_from_json(R"({"lr": 0.1})"), ValidationError);
  EXPECT_THROW(model_config_from_json(R"({"d": "wide"})"), ValidationError);
  EXPECT_THROW(loss_config_from_json("[1, 2]"), ValidationError);
  EXPECT_THROW(loss_config_from_json("{"), ValidationError);
}

TEST(ConfigJson, AblationsParse) {
  const auto m = model_config_from_json(R"({"no_gaze_s2": true, "no_verb_token": true})");
  EXPECT_TRUE(m.ablations.no_gaze_s2);
  EXPECT_TRUE(m.ablations.no_verb_token);
  EXPECT_FALSE(m.ablations.no_gaze_s1);
}

}  // namespace
}  // namespace coformer
