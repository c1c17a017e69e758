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

#include <fstream>
#include <set>

#include "coformer/error.hpp"
#include "coformer/eval.hpp"
#include "json.hpp"

namespace coformer {

using ojson = nlohmann::ordered_json;

void validate_prediction(const PredictionRecord& r, const Ontology& o) {
  const std::string where = "prediction \"" + r.image_id + "\"";
  if (r.top_verbs.empty()) throw ValidationError(where + ": empty top-verb list");
  std::set<VerbId> seen;
  for (VerbId v : r.top_verbs) {
    if (v >= o.num_verbs()) throw ValidationError(where + ": verb id out of range");
    if (!seen.insert(v).second) throw ValidationError(where + ": duplicate verb \"" + o.verb_name(v) + "\"");
  }
  std::set<VerbId> framed;
  for (const auto& f : r.frames) {
    if (f.verb >= o.num_verbs()) throw ValidationError(where + ": frame verb id out of range");
    if (!framed.insert(f.verb).second) throw ValidationError(where + ": two frames for \"" + o.verb_name(f.verb) + "\"");
    if (f.roles.size() != o.frame(f.verb).size()) {
      throw ValidationError(where + ": frame of \"" + o.verb_name(f.verb) + "\" has the wrong role count");
    }
    for (const auto& role : f.roles) {
      if (role.noun >= o.noun_classes()) throw ValidationError(where + ": noun id out of vocabulary");
      if (role.box && (role.box->x2 < role.box->x1 || role.box->y2 < role.box->y1)) {
        throw ValidationError(where + ": box corners out of order");
      }
    }
  }
}

std::string prediction_to_json(const PredictionRecord& r, const Ontology& o) {
  validate_prediction(r, o);
  ojson doc;
  doc["image_id"] = r.image_id;
  ojson verbs = ojson::array();
  for (VerbId v : r.top_verbs) verbs.push_back(o.verb_name(v));
  doc["top_verbs"] = std::move(verbs);
  ojson frames = ojson::array();
  for (const auto& f : r.frames) {
    ojson roles = ojson::array();
    const auto frame = o.frame(f.verb);
    for (std::size_t k = 0; k < f.roles.size(); ++k) {
      const auto& p = f.roles[k];
      ojson role;
      role["role"] = o.role_name(frame[k]);
      role["noun"] = p.noun == o.empty_noun() ? ojson(nullptr) : ojson(o.noun_name(p.noun));
      role["box"] = p.box ? ojson::array({p.box->x1, p.box->y1, p.box->x2, p.box->y2}) : ojson(nullptr);
      role["exist"] = p.exist;
      roles.push_back(std::move(role));
    }
    frames.push_back({{"verb", o.verb_name(f.verb)}, {"roles", std::move(roles)}});
  }
  doc["frames"] = std::move(frames);
  return doc.dump();
}

PredictionRecord prediction_from_json(std::string_view line, const Ontology& o) {
  ojson doc;
  try {
    doc = ojson::parse(line);
  } catch (const ojson::parse_error& e) {
    throw ValidationError(std::string("prediction: malformed JSON: ") + e.what());
  }
  PredictionRecord r;
  try {
    r.image_id = doc.at("image_id").get<std::string>();
    for (const auto& v : doc.at("top_verbs")) r.top_verbs.push_back(o.verb_index(v.get<std::string>()));
    for (const auto& f : doc.at("frames")) {
      FramePrediction fp;
      fp.verb = o.verb_index(f.at("verb").get<std::string>());
      const auto frame = o.frame(fp.verb);
      const auto& roles = f.at("roles");
      if (roles.size() != frame.size()) {
        throw ValidationError("prediction \"" + r.image_id + "\": frame of \"" + o.verb_name(fp.verb) +
                              "\" has the wrong role count");
      }
      for (std::size_t k = 0; k < frame.size(); ++k) {
        const auto& role = roles[k];
        if (role.at("role").get<std::string>() != o.role_name(frame[k])) {
          throw ValidationError("prediction \"" + r.image_id + "\": role \"" + role.at("role").get<std::string>() +
                                "\" out of frame order");
        }
        RolePrediction p;
        p.noun = role.at("noun").is_null() ? o.empty_noun() : o.noun_index(role.at("noun").get<std::string>());
        if (!role.at("box").is_null()) {
          const auto& b = role.at("box");
          if (b.size() != 4) throw ValidationError("prediction \"" + r.image_id + "\": box needs 4 numbers");
          p.box = Corners{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
        }
        p.exist = role.at("exist").get<double>();
        fp.roles.push_back(p);
      }
      r.frames.push_back(std::move(fp));
    }
  } catch (const ojson::exception& e) {
    throw ValidationError("prediction \"" + r.image_id + "\": " + e.what());
  }
  validate_prediction(r, o);
  return r;
}

void save_predictions(const std::filesystem::path& path, const std::vector<PredictionRecord>& records,
                      const Ontology& o) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write predictions " + path.string());
  for (const auto& r : records) out << prediction_to_json(r, o) << '\n';
}

std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path, const Ontology& o) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open predictions " + path.string());
  std::vector<PredictionRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(prediction_from_json(line, o));
  }
  return out;
}

PredictionRecord oracle_prediction(const GroundedAnnotation& a, const Ontology& o) {
  PredictionRecord r;
  r.image_id = a.image_id;
  r.top_verbs.push_back(a.verb);
  for (VerbId v = 0; v < o.num_verbs() && r.top_verbs.size() < kTopVerbs; ++v)
    if (v != a.verb) r.top_verbs.push_back(v);
  for (VerbId v : r.top_verbs) {
    FramePrediction f;
    f.verb = v;
    if (v == a.verb) {
      for (const auto& role : a.roles) {
        RolePrediction p;
        p.noun = role.nouns[0];
        if (role.box) p.box = role.box->corners();
        p.exist = role.box ? 1.0 : 0.0;
        f.roles.push_back(p);
      }
    } else {
      f.roles.assign(o.frame(v).size(), RolePrediction{o.empty_noun(), std::nullopt, 0.0});
    }
    r.frames.push_back(std::move(f));
  }
  return r;
}

}  // namespace coformer
