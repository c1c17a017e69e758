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

#include <algorithm>

#include "coformer/error.hpp"
#include "coformer/eval.hpp"
#include "coformer/losses.hpp"

namespace coformer {

namespace {

const FramePrediction& require_frame(const PredictionRecord& r, VerbId v, const Ontology& o) {
  const FramePrediction* f = r.frame_for(v);
  if (f == nullptr) {
    throw ValidationError("grsitsim: prediction \"" + r.image_id + "\" lacks a frame for \"" + o.verb_name(v) + "\"");
  }
  return *f;
}

double box_term(const RolePrediction& a, const RolePrediction& b) {
  const bool ga = a.grounded(), gb = b.grounded();
  if (ga && gb) return iou(*a.box, *b.box);
  return ga == gb ? 1.0 : 0.0;
}

}  // namespace

double grsitsim(const PredictionRecord& a, const PredictionRecord& b, const Ontology& o) {
  double best = 0.0;
  const std::size_t na = std::min(a.top_verbs.size(), kTopVerbs), nb = std::min(b.top_verbs.size(), kTopVerbs);
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < nb; ++j) {
      const VerbId v = a.top_verbs[i];
      if (v != b.top_verbs[j]) continue;
      const auto& fa = require_frame(a, v, o);
      const auto& fb = require_frame(b, v, o);
      double sum = 0.0;
      for (std::size_t k = 0; k < fa.roles.size(); ++k) {
        if (fa.roles[k].noun == fb.roles[k].noun) sum += 1.0 + box_term(fa.roles[k], fb.roles[k]);
      }
      const double denom = static_cast<double>((i + 1) * (j + 1) * fa.roles.size());
      best = std::max(best, sum / denom);
    }
  }
  return best;
}

std::vector<RetrievalHit> retrieve(const PredictionRecord& query, const std::vector<PredictionRecord>& corpus,
                                   std::size_t k, const Ontology& o) {
  if (corpus.empty()) throw ValidationError("retrieve: empty corpus");
  std::vector<RetrievalHit> hits;
  hits.reserve(corpus.size());
  for (const auto& c : corpus) hits.push_back({c.image_id, grsitsim(query, c, o)});
  std::sort(hits.begin(), hits.end(), [](const RetrievalHit& x, const RetrievalHit& y) {
    if (x.score != y.score) return x.score > y.score;
    return x.image_id < y.image_id;
  });
  if (k < hits.size()) hits.resize(k);
  return hits;
}

}  // namespace coformer
