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

#include <string>
#include <string_view>

#include "coformer/dataset.hpp"
#include "coformer/losses.hpp"
#include "coformer/model.hpp"
#include "coformer/train.hpp"

namespace coformer {

// JSON object text for each configuration record. The *_from_json
// functions start from `base` and override only the keys present; unknown
// keys are rejected with ValidationError.
std::string to_json(const ModelConfig& config);
std::string to_json(const TrainConfig& config);
std::string to_json(const LossConfig& config);
std::string to_json(const SyntheticConfig& config);

ModelConfig model_config_from_json(std::string_view text, ModelConfig base = {});
TrainConfig train_config_from_json(std::string_view text, TrainConfig base = {});
LossConfig loss_config_from_json(std::string_view text, LossConfig base = {});
SyntheticConfig synthetic_config_from_json(std::string_view text, SyntheticConfig base = {});

}  // namespace coformer
