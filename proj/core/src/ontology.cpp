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

#include "coformer/ontology.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "coformer/error.hpp"
#include "coformer/rng.hpp"
#include "json.hpp"

namespace coformer {

using ojson = nlohmann::ordered_json;

namespace {

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::unordered_map<std::string, std::size_t> index_names(const std::vector<std::string>& names, const char* kind) {
  std::unordered_map<std::string, std::size_t> lookup;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i].empty()) throw ValidationError(std::string("ontology: empty ") + kind + " name");
    if (!lookup.emplace(names[i], i).second) {
      throw ValidationError(std::string("ontology: duplicate ") + kind + " \"" + names[i] + "\"");
    }
  }
  return lookup;
}

std::size_t lookup_or_throw(const std::unordered_map<std::string, std::size_t>& lookup,
                            const std::vector<std::string>& names, std::string_view name, const char* kind) {
  auto it = lookup.find(std::string(name));
  if (it != lookup.end()) return it->second;
  std::string message = std::string("unknown ") + kind + " \"" + std::string(name) + "\"";
  const auto near = nearest_names(name, names);
  if (!near.empty()) {
    message += "; nearest candidates:";
    for (const auto& n : near) message += " \"" + n + "\"";
  }
  throw ValidationError(message);
}

std::vector<std::string> string_list(const ojson& doc, const char* key) {
  if (!doc.contains(key) || !doc[key].is_array()) {
    throw ValidationError(std::string("ontology: missing array field \"") + key + "\"");
  }
  std::vector<std::string> out;
  for (const auto& v : doc[key]) {
    if (!v.is_string()) throw ValidationError(std::string("ontology: non-string entry in \"") + key + "\"");
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace

std::vector<std::string> nearest_names(std::string_view name, const std::vector<std::string>& candidates,
                                       std::size_t count) {
  std::vector<std::pair<std::size_t, std::size_t>> scored;
  for (std::size_t i = 0; i < candidates.size(); ++i) scored.emplace_back(edit_distance(name, candidates[i]), i);
  std::stable_sort(scored.begin(), scored.end());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(count, scored.size()); ++i) out.push_back(candidates[scored[i].second]);
  return out;
}

Ontology::Ontology(std::vector<std::string> verbs, std::vector<std::string> roles, std::vector<std::string> nouns,
                   const std::vector<std::vector<std::string>>& frames,
                   const std::vector<std::string>& non_groundable_roles)
    : verbs_(std::move(verbs)), roles_(std::move(roles)), nouns_(std::move(nouns)) {
  if (verbs_.empty() || roles_.empty() || nouns_.empty()) {
    throw ValidationError("ontology: verbs, roles and nouns must all be non-empty");
  }
  verb_lookup_ = index_names(verbs_, "verb");
  role_lookup_ = index_names(roles_, "role");
  noun_lookup_ = index_names(nouns_, "noun");
  if (noun_lookup_.count(std::string(kEmptyNounName)) != 0) {
    throw ValidationError("ontology: noun name \"" + std::string(kEmptyNounName) + "\" is reserved");
  }
  if (frames.size() != verbs_.size()) {
    throw ValidationError("ontology: " + std::to_string(verbs_.size()) + " verbs but " +
                          std::to_string(frames.size()) + " frames");
  }
  frames_.resize(verbs_.size());
  for (std::size_t v = 0; v < verbs_.size(); ++v) {
    if (frames[v].empty()) throw ValidationError("ontology: empty frame for verb \"" + verbs_[v] + "\"");
    if (frames[v].size() > kMaxFrameSize) {
      throw ValidationError("ontology: frame of verb \"" + verbs_[v] + "\" has " + std::to_string(frames[v].size()) +
                            " roles (max " + std::to_string(kMaxFrameSize) + ")");
    }
    std::unordered_set<std::string> seen;
    for (const auto& role : frames[v]) {
      auto it = role_lookup_.find(role);
      if (it == role_lookup_.end()) {
        throw ValidationError("ontology: frame of verb \"" + verbs_[v] + "\" names unknown role \"" + role + "\"");
      }
      if (!seen.insert(role).second) {
        throw ValidationError("ontology: frame of verb \"" + verbs_[v] + "\" repeats role \"" + role + "\"");
      }
      frames_[v].push_back(it->second);
    }
  }
  groundable_.assign(roles_.size(), true);
  for (const auto& role : non_groundable_roles) {
    groundable_[lookup_or_throw(role_lookup_, roles_, role, "role")] = false;
  }
  if (auto it = role_lookup_.find(std::string(kPlaceRole)); it != role_lookup_.end()) groundable_[it->second] = false;
}

Ontology Ontology::from_json(std::string_view document) {
  ojson doc;
  try {
    doc = ojson::parse(document);
  } catch (const ojson::parse_error& e) {
    throw ValidationError(std::string("ontology: malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ValidationError("ontology: document must be a JSON object");
  auto verbs = string_list(doc, "verbs");
  auto roles = string_list(doc, "roles");
  auto nouns = string_list(doc, "nouns");
  std::vector<std::string> non_groundable;
  if (doc.contains("non_groundable_roles")) non_groundable = string_list(doc, "non_groundable_roles");
  if (!doc.contains("frames") || !doc["frames"].is_object()) {
    throw ValidationError("ontology: missing object field \"frames\"");
  }
  const auto& fr = doc["frames"];
  std::unordered_set<std::string> verb_set(verbs.begin(), verbs.end());
  for (const auto& [verb, _] : fr.items()) {
    if (verb_set.count(verb) == 0) throw ValidationError("ontology: frame given for unknown verb \"" + verb + "\"");
  }
  std::vector<std::vector<std::string>> frames;
  for (const auto& verb : verbs) {
    if (!fr.contains(verb)) throw ValidationError("ontology: empty frame for verb \"" + verb + "\"");
    const auto& roles_of = fr[verb];
    if (!roles_of.is_array()) throw ValidationError("ontology: frame of verb \"" + verb + "\" must be an array");
    std::vector<std::string> frame;
    for (const auto& r : roles_of) {
      if (!r.is_string()) throw ValidationError("ontology: frame of verb \"" + verb + "\" has a non-string role");
      frame.push_back(r.get<std::string>());
    }
    frames.push_back(std::move(frame));
  }
  return Ontology(std::move(verbs), std::move(roles), std::move(nouns), frames, non_groundable);
}

Ontology Ontology::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open ontology file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string Ontology::to_json() const {
  ojson doc;
  doc["verbs"] = verbs_;
  doc["roles"] = roles_;
  doc["nouns"] = nouns_;
  ojson frames = ojson::object();
  for (std::size_t v = 0; v < verbs_.size(); ++v) {
    ojson list = ojson::array();
    for (RoleId r : frames_[v]) list.push_back(roles_[r]);
    frames[verbs_[v]] = std::move(list);
  }
  doc["frames"] = std::move(frames);
  ojson ng = ojson::array();
  for (std::size_t r = 0; r < roles_.size(); ++r)
    if (!groundable_[r]) ng.push_back(roles_[r]);
  doc["non_groundable_roles"] = std::move(ng);
  return doc.dump(2);
}

void Ontology::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write ontology file " + path.string());
  out << to_json() << '\n';
}

std::uint64_t Ontology::hash() const {
  const std::string doc = to_json();
  return fnv1a64(doc.data(), doc.size());
}

VerbId Ontology::verb_index(std::string_view name) const {
  return lookup_or_throw(verb_lookup_, verbs_, name, "verb");
}

RoleId Ontology::role_index(std::string_view name) const {
  return lookup_or_throw(role_lookup_, roles_, name, "role");
}

NounId Ontology::noun_index(std::string_view name) const {
  if (name == kEmptyNounName) return empty_noun();
  return lookup_or_throw(noun_lookup_, nouns_, name, "noun");
}

const std::string& Ontology::verb_name(VerbId id) const {
  if (id >= verbs_.size()) throw ValidationError("verb id " + std::to_string(id) + " out of range");
  return verbs_[id];
}

const std::string& Ontology::role_name(RoleId id) const {
  if (id >= roles_.size()) throw ValidationError("role id " + std::to_string(id) + " out of range");
  return roles_[id];
}

std::string Ontology::noun_name(NounId id) const {
  if (id == empty_noun()) return std::string(kEmptyNounName);
  if (id > nouns_.size()) throw ValidationError("noun id " + std::to_string(id) + " out of range");
  return nouns_[id];
}

std::span<const RoleId> Ontology::frame(VerbId verb) const {
  if (verb >= frames_.size()) throw ValidationError("verb id " + std::to_string(verb) + " out of range");
  return frames_[verb];
}

bool Ontology::groundable(RoleId role) const {
  if (role >= groundable_.size()) throw ValidationError("role id " + std::to_string(role) + " out of range");
  return groundable_[role];
}

std::size_t Ontology::max_frame_size() const {
  std::size_t m = 0;
  for (const auto& f : frames_) m = std::max(m, f.size());
  return m;
}

bool Ontology::operator==(const Ontology& other) const {
  return verbs_ == other.verbs_ && roles_ == other.roles_ && nouns_ == other.nouns_ && frames_ == other.frames_ &&
         groundable_ == other.groundable_;
}

}  // namespace coformer
