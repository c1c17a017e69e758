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

#include "fixtures.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <sstream>

#include <unistd.h>

namespace coformer::testing {

ModelConfig without_dropout(ModelConfig config) {
  config.block_dropout = 0.0;
  config.verb_head_dropout = 0.0;
  config.noun_head_dropout = 0.0;
  config.box_head_dropout = 0.0;
  config.exist_head_dropout = 0.0;
  return config;
}

ModelConfig tiny_config(const Ontology& ontology) {
  ModelConfig base;
  base.d = 16;
  base.heads = 2;
  base.grid_h = 4;
  base.grid_w = 4;
  base.patch = 8;
  return without_dropout(ModelConfig::for_ontology(ontology, base));
}

Ontology mowing_ontology() {
  return Ontology({"Mowing", "Jumping", "Sleeping"}, {"Agent", "Item", "Tool", "Place", "Obstacle"},
                  {"man", "woman", "lawn", "mower", "fence", "field", "bed"},
                  {{"Agent", "Item", "Tool", "Place"}, {"Agent", "Obstacle", "Place"}, {"Agent"}}, {"Place"});
}

Corners random_corners(Rng& rng, double min_side) {
  const double w = rng.uniform(min_side, 0.8), h = rng.uniform(min_side, 0.8);
  const double x1 = rng.uniform(0.0, 1.0 - w), y1 = rng.uniform(0.0, 1.0 - h);
  return {x1, y1, x1 + w, y1 + h};
}

GroundedAnnotation random_annotation(const Ontology& o, Rng& rng, const std::string& image_id) {
  GroundedAnnotation a;
  a.image_id = image_id;
  a.verb = rng.uniform_index(o.num_verbs());
  for (RoleId r : o.frame(a.verb)) {
    RoleAnnotation ra;
    ra.role = r;
    for (auto& n : ra.nouns) n = rng.bernoulli(0.15) ? o.empty_noun() : rng.uniform_index(o.num_nouns());
    if (o.groundable(r) && rng.bernoulli(0.75)) ra.box = Box::from_corners(random_corners(rng, 0.05));
    a.roles.push_back(ra);
  }
  return a;
}

PredictionRecord noisy_prediction(const GroundedAnnotation& a, const Ontology& o, Rng& rng) {
  std::vector<VerbId> verbs(o.num_verbs());
  for (std::size_t v = 0; v < verbs.size(); ++v) verbs[v] = v;
  rng.shuffle(verbs);
  verbs.resize(std::min(kTopVerbs, verbs.size()));
  // Place the annotated verb at a random rank or drop it.
  verbs.erase(std::remove(verbs.begin(), verbs.end(), a.verb), verbs.end());
  const std::size_t slot = rng.uniform_index(kTopVerbs + 2);
  if (slot < kTopVerbs) {
    verbs.insert(verbs.begin() + static_cast<std::ptrdiff_t>(std::min(slot, verbs.size())), a.verb);
  }
  verbs.resize(std::min(verbs.size(), kTopVerbs));
  if (slot == 0 && verbs.front() != a.verb) verbs.front() = a.verb;

  PredictionRecord p;
  p.image_id = a.image_id;
  p.top_verbs = verbs;
  std::vector<VerbId> conditioning = verbs;
  if (std::find(verbs.begin(), verbs.end(), a.verb) == verbs.end()) conditioning.push_back(a.verb);
  for (VerbId v : conditioning) {
    FramePrediction f;
    f.verb = v;
    const auto frame = o.frame(v);
    for (std::size_t k = 0; k < frame.size(); ++k) {
      RolePrediction rp;
      const RoleAnnotation* truth = v == a.verb ? &a.roles[k] : nullptr;
      if (truth != nullptr && rng.bernoulli(0.7)) {
        rp.noun = truth->nouns[rng.uniform_index(kAnnotators)];
      } else {
        rp.noun = rng.uniform_index(o.noun_classes());
      }
      rp.exist = rng.uniform();
      if (rng.bernoulli(0.15)) rp.exist = 0.5;
      if (truth != nullptr && truth->box && rng.bernoulli(0.7)) {
        Corners c = truth->box->corners();
        const double j = rng.uniform(0.0, 0.15);
        c.x1 = std::max(0.0, c.x1 - j);
        c.x2 = std::min(1.0, c.x2 + rng.uniform(0.0, 0.15));
        rp.box = c;
      } else if (rng.bernoulli(0.8)) {
        rp.box = random_corners(rng);
      }
      f.roles.push_back(rp);
    }
    p.frames.push_back(std::move(f));
  }
  return p;
}

ScratchDir::ScratchDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("coformer_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

ScratchDir::~ScratchDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace coformer::testing
