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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace coformer {

inline constexpr std::size_t kMaxFrameSize = 6;
// Display name of the reserved "unknown noun" class. It always takes the
// last noun id, so noun heads emit num_nouns() + 1 logits.
inline constexpr std::string_view kEmptyNounName = "<none>";
inline constexpr std::string_view kPlaceRole = "Place";

using VerbId = std::size_t;
using RoleId = std::size_t;
using NounId = std::size_t;

// Verbs, roles, nouns and the verb -> ordered role frames. Immutable after
// construction; indices follow declaration order.
class Ontology {
 public:
  Ontology() = default;
  // `frames[v]` lists role names of verb v in frame order.
  Ontology(std::vector<std::string> verbs, std::vector<std::string> roles, std::vector<std::string> nouns,
           const std::vector<std::vector<std::string>>& frames,
           const std::vector<std::string>& non_groundable_roles);

  // Document keys: verbs, roles, nouns, frames, non_groundable_roles.
  static Ontology from_json(std::string_view document);
  static Ontology load(const std::filesystem::path& path);
  std::string to_json() const;
  void save(const std::filesystem::path& path) const;
  // FNV-1a of the canonical document.
  std::uint64_t hash() const;

  std::size_t num_verbs() const { return verbs_.size(); }
  std::size_t num_roles() const { return roles_.size(); }
  std::size_t num_nouns() const { return nouns_.size(); }
  std::size_t noun_classes() const { return nouns_.size() + 1; }
  NounId empty_noun() const { return nouns_.size(); }

  VerbId verb_index(std::string_view name) const;
  RoleId role_index(std::string_view name) const;
  NounId noun_index(std::string_view name) const;
  const std::string& verb_name(VerbId id) const;
  const std::string& role_name(RoleId id) const;
  std::string noun_name(NounId id) const;

  std::span<const RoleId> frame(VerbId verb) const;
  bool groundable(RoleId role) const;
  std::size_t max_frame_size() const;

  const std::vector<std::string>& verbs() const { return verbs_; }
  const std::vector<std::string>& roles() const { return roles_; }
  const std::vector<std::string>& nouns() const { return nouns_; }

  bool operator==(const Ontology& other) const;

 private:
  std::vector<std::string> verbs_;
  std::vector<std::string> roles_;
  std::vector<std::string> nouns_;
  std::vector<std::vector<RoleId>> frames_;
  std::vector<bool> groundable_;
  std::unordered_map<std::string, std::size_t> verb_lookup_;
  std::unordered_map<std::string, std::size_t> role_lookup_;
  std::unordered_map<std::string, std::size_t> noun_lookup_;
};

// The `count` names in `candidates` closest to `name` by edit distance.
std::vector<std::string> nearest_names(std::string_view name, const std::vector<std::string>& candidates,
                                       std::size_t count = 3);

}  // namespace coformer
