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

// Grounded annotations, the synthetic shape-world generator, augmentation
// and the patch embedder standing in for a CNN backbone.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coformer/image.hpp"
#include "coformer/nn.hpp"
#include "coformer/ontology.hpp"
#include "coformer/tensor.hpp"

namespace coformer {

struct Corners {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  bool operator==(const Corners&) const = default;
};

// Relative center/size box, all components in [0, 1].
struct Box {
  double cx = 0, cy = 0, w = 0, h = 0;

  Corners corners() const { return {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2}; }
  static Box from_corners(const Corners& c) {
    return {(c.x1 + c.x2) / 2, (c.y1 + c.y2) / 2, c.x2 - c.x1, c.y2 - c.y1};
  }
  bool operator==(const Box&) const = default;
};

inline constexpr std::size_t kAnnotators = 3;

struct RoleAnnotation {
  RoleId role = 0;
  std::array<NounId, kAnnotators> nouns{};
  std::optional<Box> box;  // nullopt = not grounded
  bool operator==(const RoleAnnotation&) const = default;
};

struct GroundedAnnotation {
  std::string image_id;
  VerbId verb = 0;
  std::vector<RoleAnnotation> roles;  // frame order of `verb`
  bool operator==(const GroundedAnnotation&) const = default;
};

// Throws ValidationError naming the image and role on any violation of
// the frame, vocabulary, grounding or box-range rules.
void validate_annotation(const GroundedAnnotation& annotation, const Ontology& ontology);

std::string annotation_to_json(const GroundedAnnotation& annotation, const Ontology& ontology);
GroundedAnnotation annotation_from_json(std::string_view line, const Ontology& ontology);
// JSON lines, one image per line.
void save_annotations(const std::filesystem::path& path, const std::vector<GroundedAnnotation>& annotations,
                      const Ontology& ontology);
std::vector<GroundedAnnotation> load_annotations(const std::filesystem::path& path, const Ontology& ontology);

// ---- synthetic shape world --------------------------------------------------

enum class GlyphShape : std::size_t { Square = 0, Disc = 1, Triangle = 2 };
inline constexpr std::size_t kGlyphShapes = 3;
inline constexpr std::size_t kGlyphColors = 10;
inline constexpr std::size_t kBackgrounds = 10;

struct Glyph {
  GlyphShape shape = GlyphShape::Square;
  std::size_t color = 0;
  Box box;
};

// The generator's ground-truth scene before rasterization.
struct Scene {
  std::size_t background = 0;
  std::vector<Glyph> glyphs;  // strictly decreasing area
};

inline constexpr std::size_t kMinResolution = 32;

struct SyntheticConfig {
  std::size_t count = 64;
  std::uint64_t seed = 0;
  std::size_t grid = 8;
  std::size_t resolution = 64;
  double empty_box_fraction = 0.1;
  double synonym_probability = 0.3;
};

struct Sample {
  Image image;
  GroundedAnnotation annotation;
  Scene scene;
};

// 12 verbs, 10 roles, 40 nouns (30 colored glyphs + 10 backgrounds).
Ontology synthetic_ontology();

// Verb semantics of the shape world: a verb is identified by the number of
// glyph roles in its frame and the shape of the largest glyph.
class ShapeWorld {
 public:
  explicit ShapeWorld(const Ontology& ontology);

  VerbId verb_for(std::size_t glyph_count, GlyphShape dominant) const;
  std::size_t glyph_count(VerbId verb) const { return glyph_counts_.at(verb); }
  GlyphShape dominant_shape(VerbId verb) const { return dominant_.at(verb); }
  // Re-derives the verb from a rendered scene.
  VerbId derive_verb(const Scene& scene) const;

  NounId glyph_noun(GlyphShape shape, std::size_t color) const;
  NounId background_noun(std::size_t background) const { return background_nouns_.at(background); }
  // Up to two alternative nouns annotators may substitute.
  std::vector<NounId> synonyms(NounId noun) const;
  bool is_glyph_role(RoleId role) const { return glyph_role_.at(role); }

  const Ontology& ontology() const { return *ontology_; }

 private:
  const Ontology* ontology_;
  std::vector<std::size_t> glyph_counts_;
  std::vector<GlyphShape> dominant_;
  std::vector<bool> glyph_role_;
  std::vector<NounId> glyph_nouns_;  // shape * kGlyphColors + color
  std::vector<NounId> background_nouns_;
  std::vector<std::vector<VerbId>> by_count_;  // [count][shape]
};

std::string glyph_noun_name(GlyphShape shape, std::size_t color);
std::string background_noun_name(std::size_t background);
Image render_scene(const Scene& scene, std::size_t resolution, std::uint64_t noise_seed);

// Deterministic in (ontology, config). Throws for count == 0, a grid that
// does not tile the resolution, or a resolution below kMinResolution.
std::vector<Sample> generate_dataset(const Ontology& ontology, const SyntheticConfig& config);

// On-disk dataset: ontology.json, annotations.jsonl, images/<id>.ppm and
// manifest.json with the generator settings and content hashes.
struct DatasetManifest {
  std::size_t count = 0;
  std::size_t grid = 0;
  std::size_t resolution = 0;
  std::uint64_t seed = 0;
  std::uint64_t ontology_hash = 0;
  std::uint64_t annotations_hash = 0;
};

struct LoadedDataset {
  Ontology ontology;
  DatasetManifest manifest;
  std::vector<Sample> samples;  // scenes are left empty
};

DatasetManifest save_dataset(const std::filesystem::path& directory, const Ontology& ontology,
                             const std::vector<Sample>& samples, const SyntheticConfig& config);
LoadedDataset load_dataset(const std::filesystem::path& directory);

// ---- augmentation -----------------------------------------------------------

struct AugmentDecision {
  bool flip = false;
  double scale = 1.0;  // one of 0.5, 0.75, 1.0
};

inline constexpr std::array<double, 3> kAugmentScales = {0.5, 0.75, 1.0};

AugmentDecision draw_augmentation(std::uint64_t seed);
// Horizontal flip maps cx to 1 - cx. Scaling resamples the raster down by
// the factor and back to its original size, leaving relative boxes as is.
std::pair<Image, GroundedAnnotation> apply_augmentation(const Image& image, const GroundedAnnotation& annotation,
                                                        const AugmentDecision& decision);
std::pair<Image, GroundedAnnotation> augment(const Image& image, const GroundedAnnotation& annotation,
                                             std::uint64_t seed);

// ---- patch embedder ---------------------------------------------------------

// Flattened h*w x d grid in row-major cell order.
template <class T>
struct FeatureGrid {
  std::string image_id;
  std::size_t height = 0;
  std::size_t width = 0;
  Tensor<T> features;
};

// Non-overlapping square patches, each linearly projected to d channels.
template <class T>
struct PatchEmbedder {
  nn::Linear<T> projection;
  std::size_t patch = 8;

  static PatchEmbedder create(std::size_t patch, std::size_t d, Rng& rng);
  void visit(const std::string& prefix, const nn::ParamVisitor<T>& visitor) { projection.visit(prefix, visitor); }
};

// [cells, patch*patch*3] patch matrix with pixel values scaled to [0, 1].
template <class T>
Tensor<T> patchify(const Image& image, std::size_t patch);

template <class T>
FeatureGrid<T> embed_image(const Image& image, const PatchEmbedder<T>& embedder, std::string image_id = {});

}  // namespace coformer
