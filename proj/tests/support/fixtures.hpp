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

// Shared fixtures: small model configurations, random annotations and
// noisy predictions for oracle comparisons, scratch directories.

#include <filesystem>
#include <string>
#include <vector>

#include "coformer/dataset.hpp"
#include "coformer/eval.hpp"
#include "coformer/model.hpp"
#include "coformer/ontology.hpp"
#include "coformer/rng.hpp"

namespace coformer::testing {

// d = 16, two heads, 4 x 4 grid of 8-pixel patches, dropout off.
ModelConfig tiny_config(const Ontology& ontology);
// Same ratios as the toy defaults, dropout off.
ModelConfig without_dropout(ModelConfig config);

// Ontology with verbs Mowing (Agent, Item, Tool, Place), Jumping
// (Agent, Obstacle, Place) and Sleeping (Agent).
Ontology mowing_ontology();

GroundedAnnotation random_annotation(const Ontology& ontology, Rng& rng, const std::string& image_id);
// Perturbs the oracle prediction: verb rank shuffles, noun mistakes,
// jittered or missing boxes, existence probabilities near 0.5.
PredictionRecord noisy_prediction(const GroundedAnnotation& annotation, const Ontology& ontology, Rng& rng);

Corners random_corners(Rng& rng, double min_side = 1e-3);

// Created on construction, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag);
  ~ScratchDir();
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& path);

}  // namespace coformer::testing
