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
#include <cstdio>
#include <unordered_map>

#include "coformer/error.hpp"
#include "coformer/eval.hpp"
#include "coformer/losses.hpp"
#include "json.hpp"

namespace coformer {

const char* setting_name(Setting s) {
  switch (s) {
    case Setting::Top1:
      return "top1";
    case Setting::Top5:
      return "top5";
    case Setting::GtVerb:
      return "gt_verb";
  }
  return "?";
}

bool judge_noun(NounId predicted, const std::array<NounId, kAnnotators>& annotation) {
  return std::find(annotation.begin(), annotation.end(), predicted) != annotation.end();
}

bool judge_grounding(const std::optional<Corners>& box, double exist, const std::optional<Box>& truth) {
  const bool predicted = exist >= 0.5;
  if (!truth) return !predicted;
  return predicted && box.has_value() && iou(*box, truth->corners()) >= 0.5;
}

ImageScore score_image(const PredictionRecord& p, const GroundedAnnotation& a, Setting setting, const Ontology& o) {
  ImageScore s;
  bool verb_ok = true;
  if (setting == Setting::Top1) {
    verb_ok = !p.top_verbs.empty() && p.top_verbs.front() == a.verb;
  } else if (setting == Setting::Top5) {
    const auto n = std::min(p.top_verbs.size(), kTopVerbs);
    verb_ok = std::find(p.top_verbs.begin(), p.top_verbs.begin() + static_cast<std::ptrdiff_t>(n), a.verb) !=
              p.top_verbs.begin() + static_cast<std::ptrdiff_t>(n);
  }
  s.verb = verb_ok ? 1.0 : 0.0;
  if (!verb_ok) return s;

  const FramePrediction* f = p.frame_for(a.verb);
  if (f == nullptr) {
    throw ValidationError("image \"" + a.image_id + "\": prediction has no frame for verb \"" + o.verb_name(a.verb) + "\"");
  }
  if (f->roles.size() != a.roles.size()) {
    throw ValidationError("image \"" + a.image_id + "\": predicted frame does not match the annotated frame");
  }
  std::size_t nouns = 0, grounded = 0;
  for (std::size_t k = 0; k < a.roles.size(); ++k) {
    const auto& pr = f->roles[k];
    const bool noun_ok = judge_noun(pr.noun, a.roles[k].nouns);
    nouns += noun_ok;
    grounded += noun_ok && judge_grounding(pr.box, pr.exist, a.roles[k].box);
  }
  const double n = static_cast<double>(a.roles.size());
  s.value = static_cast<double>(nouns) / n;
  s.value_all = nouns == a.roles.size() ? 1.0 : 0.0;
  s.grounded_value = static_cast<double>(grounded) / n;
  s.grounded_value_all = grounded == a.roles.size() ? 1.0 : 0.0;
  return s;
}

std::vector<double> MetricReport::numbers() const {
  std::vector<double> out;
  for (Setting s : kSettings) {
    const auto& m = at(s);
    if (m.verb) out.push_back(*m.verb);
    out.insert(out.end(), {m.value, m.value_all, m.grounded_value, m.grounded_value_all});
  }
  return out;
}

namespace {

nlohmann::ordered_json setting_json(const SettingMetrics& m) {
  nlohmann::ordered_json j;
  if (m.verb) j["verb"] = *m.verb;
  j["value"] = m.value;
  j["value_all"] = m.value_all;
  j["grounded_value"] = m.grounded_value;
  j["grounded_value_all"] = m.grounded_value_all;
  return j;
}

}  // namespace

std::string MetricReport::to_json() const {
  nlohmann::ordered_json doc;
  doc["images"] = images;
  for (Setting s : kSettings) doc[setting_name(s)] = setting_json(at(s));
  doc["numbers"] = numbers();
  nlohmann::ordered_json verbs = nlohmann::ordered_json::object();
  for (const auto& [name, metrics] : per_verb) {
    nlohmann::ordered_json v;
    for (Setting s : kSettings) v[setting_name(s)] = setting_json(metrics[static_cast<std::size_t>(s)]);
    verbs[name] = std::move(v);
  }
  doc["per_verb"] = std::move(verbs);
  return doc.dump(2);
}

MetricReport aggregate(const std::vector<ScoredImage>& scored, const Ontology& o) {
  if (scored.empty()) throw ValidationError("aggregate: empty evaluation set");
  std::vector<std::vector<const ScoredImage*>> by_verb(o.num_verbs());
  for (const auto& s : scored) {
    if (s.verb >= o.num_verbs()) throw ValidationError("aggregate: verb id out of range");
    by_verb[s.verb].push_back(&s);
  }
  MetricReport report;
  report.images = scored.size();
  std::size_t verbs = 0;
  for (VerbId v = 0; v < o.num_verbs(); ++v) {
    const auto& group = by_verb[v];
    if (group.empty()) continue;
    ++verbs;
    std::array<SettingMetrics, 3> means;
    for (std::size_t si = 0; si < kSettings.size(); ++si) {
      ImageScore sum;
      for (const ScoredImage* img : group) {
        const ImageScore& x = img->scores[si];
        sum.verb += x.verb;
        sum.value += x.value;
        sum.value_all += x.value_all;
        sum.grounded_value += x.grounded_value;
        sum.grounded_value_all += x.grounded_value_all;
      }
      const double n = static_cast<double>(group.size());
      SettingMetrics& m = means[si];
      if (kSettings[si] != Setting::GtVerb) m.verb = 100.0 * sum.verb / n;
      m.value = 100.0 * sum.value / n;
      m.value_all = 100.0 * sum.value_all / n;
      m.grounded_value = 100.0 * sum.grounded_value / n;
      m.grounded_value_all = 100.0 * sum.grounded_value_all / n;

      SettingMetrics& total = report.settings[si];
      if (m.verb) total.verb = total.verb.value_or(0.0) + *m.verb;
      total.value += m.value;
      total.value_all += m.value_all;
      total.grounded_value += m.grounded_value;
      total.grounded_value_all += m.grounded_value_all;
    }
    report.per_verb[o.verb_name(v)] = means;
  }
  const double nv = static_cast<double>(verbs);
  for (auto& m : report.settings) {
    if (m.verb) *m.verb /= nv;
    m.value /= nv;
    m.value_all /= nv;
    m.grounded_value /= nv;
    m.grounded_value_all /= nv;
  }
  return report;
}

MetricReport evaluate(const std::vector<PredictionRecord>& predictions,
                      const std::vector<GroundedAnnotation>& annotations, const Ontology& o) {
  std::unordered_map<std::string, const PredictionRecord*> index;
  for (const auto& p : predictions) {
    if (!index.emplace(p.image_id, &p).second) {
      throw ValidationError("evaluate: duplicate prediction for image \"" + p.image_id + "\"");
    }
  }
  std::vector<ScoredImage> scored;
  scored.reserve(annotations.size());
  for (const auto& a : annotations) {
    const auto it = index.find(a.image_id);
    if (it == index.end()) throw ValidationError("evaluate: no prediction for image \"" + a.image_id + "\"");
    ScoredImage s;
    s.verb = a.verb;
    for (std::size_t si = 0; si < kSettings.size(); ++si) s.scores[si] = score_image(*it->second, a, kSettings[si], o);
    scored.push_back(s);
  }
  return aggregate(scored, o);
}

}  // namespace coformer
