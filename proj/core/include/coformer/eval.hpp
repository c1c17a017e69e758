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

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coformer/dataset.hpp"
#include "coformer/model.hpp"
#include "coformer/ontology.hpp"

namespace coformer {

// ---- prediction files -------------------------------------------------------

// Verbs distinct, each frame's roles matching its verb, boxes ordered.
void validate_prediction(const PredictionRecord& record, const Ontology& ontology);
std::string prediction_to_json(const PredictionRecord& record, const Ontology& ontology);
PredictionRecord prediction_from_json(std::string_view line, const Ontology& ontology);
void save_predictions(const std::filesystem::path& path, const std::vector<PredictionRecord>& records,
                      const Ontology& ontology);
std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path, const Ontology& ontology);

// Predictions that reproduce the ground truth exactly: the annotated verb
// ranked first, annotator-1 nouns and the true boxes.
PredictionRecord oracle_prediction(const GroundedAnnotation& annotation, const Ontology& ontology);

// ---- scoring ----------------------------------------------------------------

enum class Setting { Top1 = 0, Top5 = 1, GtVerb = 2 };
inline constexpr std::array<Setting, 3> kSettings = {Setting::Top1, Setting::Top5, Setting::GtVerb};
const char* setting_name(Setting setting);

bool judge_noun(NounId predicted, const std::array<NounId, kAnnotators>& annotation);
// Existence is decided by exist >= 0.5. An absent ground-truth box needs a
// negative decision; a present one needs a positive decision and IoU >= 0.5.
bool judge_grounding(const std::optional<Corners>& box, double exist, const std::optional<Box>& truth);

struct ImageScore {
  double verb = 0, value = 0, value_all = 0, grounded_value = 0, grounded_value_all = 0;
};

ImageScore score_image(const PredictionRecord& prediction, const GroundedAnnotation& annotation, Setting setting,
                       const Ontology& ontology);

// Per-verb macro averages in percent. `verb` is unset for GT-Verb.
struct SettingMetrics {
  std::optional<double> verb;
  double value = 0, value_all = 0, grounded_value = 0, grounded_value_all = 0;
};

struct ScoredImage {
  VerbId verb = 0;
  std::array<ImageScore, 3> scores;
};

struct MetricReport {
  std::array<SettingMetrics, 3> settings;
  std::map<std::string, std::array<SettingMetrics, 3>> per_verb;
  std::size_t images = 0;

  const SettingMetrics& at(Setting s) const { return settings[static_cast<std::size_t>(s)]; }
  // Top-1 (5), Top-5 (5), GT-Verb (4).
  std::vector<double> numbers() const;
  std::string to_json() const;
};

// Images grouped by ground-truth verb; verbs without images are skipped.
MetricReport aggregate(const std::vector<ScoredImage>& scored, const Ontology& ontology);

// Scores every annotation against the prediction with the same image_id.
MetricReport evaluate(const std::vector<PredictionRecord>& predictions,
                      const std::vector<GroundedAnnotation>& annotations, const Ontology& ontology);

// ---- grounded situation retrieval -------------------------------------------

// Max over top-verb rank pairs (i, j) with equal verbs of
// sum_k [same noun] * (1 + box term) / (i * j * |frame|). The box term is
// the IoU when both roles are grounded, 1 when neither is, else 0.
double grsitsim(const PredictionRecord& a, const PredictionRecord& b, const Ontology& ontology);

struct RetrievalHit {
  std::string image_id;
  double score = 0;
};

// Descending score; ties by image_id. k beyond the corpus returns all.
std::vector<RetrievalHit> retrieve(const PredictionRecord& query, const std::vector<PredictionRecord>& corpus,
                                   std::size_t k, const Ontology& ontology);

}  // namespace coformer
