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

#include "coformer/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>

#include "coformer/error.hpp"
#include "json.hpp"

namespace coformer {

using ojson = nlohmann::ordered_json;

// ---- annotations ------------------------------------------------------------

namespace {

constexpr double kBoxTolerance = 1e-6;

std::string role_context(const GroundedAnnotation& a, const Ontology& o, RoleId role) {
  return "image \"" + a.image_id + "\", role \"" + (role < o.num_roles() ? o.role_name(role) : "?") + "\"";
}

}  // namespace

void validate_annotation(const GroundedAnnotation& a, const Ontology& o) {
  if (a.verb >= o.num_verbs()) throw ValidationError("image \"" + a.image_id + "\": verb id out of range");
  const auto frame = o.frame(a.verb);
  if (a.roles.size() != frame.size()) {
    throw ValidationError("image \"" + a.image_id + "\": " + std::to_string(a.roles.size()) +
                          " roles annotated but frame of \"" + o.verb_name(a.verb) + "\" has " +
                          std::to_string(frame.size()));
  }
  for (std::size_t k = 0; k < frame.size(); ++k) {
    const auto& r = a.roles[k];
    if (r.role != frame[k]) {
      throw ValidationError(role_context(a, o, r.role) + ": role does not match frame position " + std::to_string(k) +
                            " (expected \"" + o.role_name(frame[k]) + "\")");
    }
    for (NounId n : r.nouns) {
      if (n >= o.noun_classes()) throw ValidationError(role_context(a, o, r.role) + ": noun id out of vocabulary");
    }
    if (r.box) {
      if (!o.groundable(r.role)) throw ValidationError(role_context(a, o, r.role) + ": non-groundable role has a box");
      const Box& b = *r.box;
      const Corners c = b.corners();
      const bool ok = b.w > 0 && b.h > 0 && c.x1 >= -kBoxTolerance && c.y1 >= -kBoxTolerance &&
                      c.x2 <= 1 + kBoxTolerance && c.y2 <= 1 + kBoxTolerance;
      if (!ok) throw ValidationError(role_context(a, o, r.role) + ": box outside the unit square or degenerate");
    }
  }
}

std::string annotation_to_json(const GroundedAnnotation& a, const Ontology& o) {
  validate_annotation(a, o);
  ojson doc;
  doc["image_id"] = a.image_id;
  doc["verb"] = o.verb_name(a.verb);
  ojson frames = ojson::array();
  for (std::size_t k = 0; k < kAnnotators; ++k) {
    ojson f = ojson::object();
    for (const auto& r : a.roles) {
      const NounId n = r.nouns[k];
      f[o.role_name(r.role)] = n == o.empty_noun() ? ojson(nullptr) : ojson(o.noun_name(n));
    }
    frames.push_back(std::move(f));
  }
  doc["frames"] = std::move(frames);
  ojson boxes = ojson::object();
  for (const auto& r : a.roles) {
    boxes[o.role_name(r.role)] = r.box ? ojson::array({r.box->cx, r.box->cy, r.box->w, r.box->h}) : ojson(nullptr);
  }
  doc["boxes"] = std::move(boxes);
  return doc.dump();
}

GroundedAnnotation annotation_from_json(std::string_view line, const Ontology& o) {
  ojson doc;
  try {
    doc = ojson::parse(line);
  } catch (const ojson::parse_error& e) {
    throw ValidationError(std::string("annotation: malformed JSON: ") + e.what());
  }
  GroundedAnnotation a;
  if (!doc.contains("image_id") || !doc["image_id"].is_string()) throw ValidationError("annotation: missing image_id");
  a.image_id = doc["image_id"].get<std::string>();
  const std::string where = "image \"" + a.image_id + "\"";
  if (!doc.contains("verb") || !doc["verb"].is_string()) throw ValidationError(where + ": missing verb");
  a.verb = o.verb_index(doc["verb"].get<std::string>());
  const auto frame = o.frame(a.verb);
  std::set<std::string> expected;
  for (RoleId r : frame) expected.insert(o.role_name(r));

  auto check_keys = [&](const ojson& obj, const char* what) {
    if (!obj.is_object()) throw ValidationError(where + ": " + what + " must be an object");
    for (const auto& [key, _] : obj.items()) {
      if (expected.count(key) == 0) {
        throw ValidationError(where + ", role \"" + key + "\": not in the frame of \"" + o.verb_name(a.verb) + "\"");
      }
    }
    for (const auto& role : expected) {
      if (!obj.contains(role)) throw ValidationError(where + ", role \"" + role + "\": missing from " + what);
    }
  };

  if (!doc.contains("frames") || !doc["frames"].is_array() || doc["frames"].size() != kAnnotators) {
    throw ValidationError(where + ": expected " + std::to_string(kAnnotators) + " annotator frames");
  }
  for (const auto& f : doc["frames"]) check_keys(f, "frames");
  if (!doc.contains("boxes")) throw ValidationError(where + ": missing boxes");
  check_keys(doc["boxes"], "boxes");

  for (RoleId role : frame) {
    const std::string& name = o.role_name(role);
    RoleAnnotation r;
    r.role = role;
    for (std::size_t k = 0; k < kAnnotators; ++k) {
      const auto& n = doc["frames"][k][name];
      if (n.is_null()) {
        r.nouns[k] = o.empty_noun();
      } else if (n.is_string()) {
        try {
          r.nouns[k] = o.noun_index(n.get<std::string>());
        } catch (const ValidationError& e) {
          throw ValidationError(where + ", role \"" + name + "\": noun out of vocabulary (" + e.what() + ")");
        }
      } else {
        throw ValidationError(where + ", role \"" + name + "\": noun must be a string or null");
      }
    }
    const auto& b = doc["boxes"][name];
    if (!b.is_null()) {
      if (!b.is_array() || b.size() != 4) throw ValidationError(where + ", role \"" + name + "\": box needs 4 numbers");
      for (const auto& v : b)
        if (!v.is_number()) throw ValidationError(where + ", role \"" + name + "\": box needs 4 numbers");
      r.box = Box{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
    }
    a.roles.push_back(r);
  }
  validate_annotation(a, o);
  return a;
}

void save_annotations(const std::filesystem::path& path, const std::vector<GroundedAnnotation>& annotations,
                      const Ontology& ontology) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write annotations " + path.string());
  for (const auto& a : annotations) out << annotation_to_json(a, ontology) << '\n';
}

std::vector<GroundedAnnotation> load_annotations(const std::filesystem::path& path, const Ontology& ontology) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotations " + path.string());
  std::vector<GroundedAnnotation> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(annotation_from_json(line, ontology));
  }
  return out;
}

// ---- synthetic world --------------------------------------------------------

namespace {

constexpr std::array<const char*, kGlyphShapes> kShapeNames = {"square", "disc", "triangle"};
constexpr std::array<const char*, kGlyphColors> kColorNames = {"red",  "orange", "yellow", "green", "cyan",
                                                               "blue", "purple", "pink",   "white", "brown"};
constexpr std::array<std::array<int, 3>, kGlyphColors> kColorRgb = {{{220, 40, 40},
                                                                     {240, 140, 20},
                                                                     {230, 220, 40},
                                                                     {40, 180, 60},
                                                                     {40, 200, 210},
                                                                     {40, 70, 220},
                                                                     {140, 50, 200},
                                                                     {240, 120, 190},
                                                                     {245, 245, 245},
                                                                     {130, 80, 30}}};
constexpr std::array<const char*, kBackgrounds> kBackgroundNames = {
    "meadow", "desert", "ocean", "night", "snowfield", "forest", "cave", "street", "stage", "lagoon"};
constexpr std::array<std::array<int, 3>, kBackgrounds> kBackgroundRgb = {{{80, 110, 70},
                                                                          {140, 125, 90},
                                                                          {50, 80, 120},
                                                                          {25, 25, 40},
                                                                          {185, 185, 195},
                                                                          {35, 60, 40},
                                                                          {70, 60, 55},
                                                                          {100, 100, 100},
                                                                          {110, 40, 50},
                                                                          {40, 110, 110}}};
// Roles whose filler is never depicted: always the empty noun, never boxed.
constexpr std::array<const char*, 4> kAbsentRoles = {"Destination", "Source", "Substance", "Target"};

constexpr int kPixelNoise = 6;

std::uint8_t clamp_byte(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

}  // namespace

std::string glyph_noun_name(GlyphShape shape, std::size_t color) {
  return std::string(kColorNames.at(color)) + "_" + kShapeNames.at(static_cast<std::size_t>(shape));
}

std::string background_noun_name(std::size_t background) { return kBackgroundNames.at(background); }

Ontology synthetic_ontology() {
  std::vector<std::string> verbs = {"standing", "posing",  "arriving", "carrying", "pushing", "fetching",
                                    "hammering", "mowing", "spraying", "lifting",  "tugging", "attacking"};
  std::vector<std::string> roles = {"Agent",  "Item",      "Tool",   "Coagent",   "Victim",
                                    "Place",  "Destination", "Source", "Substance", "Target"};
  std::vector<std::string> nouns;
  for (std::size_t s = 0; s < kGlyphShapes; ++s)
    for (std::size_t c = 0; c < kGlyphColors; ++c) nouns.push_back(glyph_noun_name(static_cast<GlyphShape>(s), c));
  for (std::size_t b = 0; b < kBackgrounds; ++b) nouns.push_back(background_noun_name(b));
  std::vector<std::vector<std::string>> frames = {
      {"Agent"},
      {"Agent", "Place"},
      {"Agent", "Place", "Destination"},
      {"Agent", "Item"},
      {"Agent", "Item", "Place"},
      {"Agent", "Item", "Place", "Source"},
      {"Agent", "Item", "Tool"},
      {"Agent", "Item", "Tool", "Place"},
      {"Agent", "Item", "Tool", "Place", "Substance"},
      {"Agent", "Item", "Tool", "Coagent"},
      {"Agent", "Item", "Tool", "Coagent", "Place"},
      {"Agent", "Victim", "Tool", "Coagent", "Place", "Target"},
  };
  return Ontology(std::move(verbs), std::move(roles), std::move(nouns), frames, {"Place"});
}

ShapeWorld::ShapeWorld(const Ontology& ontology) : ontology_(&ontology) {
  auto require_noun = [&](const std::string& name) {
    try {
      return ontology.noun_index(name);
    } catch (const ValidationError&) {
      throw ValidationError("ontology lacks shape-world noun \"" + name + "\"");
    }
  };
  for (std::size_t s = 0; s < kGlyphShapes; ++s)
    for (std::size_t c = 0; c < kGlyphColors; ++c)
      glyph_nouns_.push_back(require_noun(glyph_noun_name(static_cast<GlyphShape>(s), c)));
  for (std::size_t b = 0; b < kBackgrounds; ++b) background_nouns_.push_back(require_noun(background_noun_name(b)));

  glyph_role_.assign(ontology.num_roles(), false);
  for (RoleId r = 0; r < ontology.num_roles(); ++r) {
    const std::string& name = ontology.role_name(r);
    const bool absent = std::find(kAbsentRoles.begin(), kAbsentRoles.end(), name) != kAbsentRoles.end();
    glyph_role_[r] = ontology.groundable(r) && !absent;
  }
  for (VerbId v = 0; v < ontology.num_verbs(); ++v) {
    std::size_t count = 0;
    for (RoleId r : ontology.frame(v)) count += glyph_role_[r] ? 1 : 0;
    if (count == 0) {
      throw ValidationError("shape world: verb \"" + ontology.verb_name(v) + "\" has no depictable role");
    }
    if (by_count_.size() <= count) by_count_.resize(count + 1);
    if (by_count_[count].size() >= kGlyphShapes) {
      throw ValidationError("shape world: more than " + std::to_string(kGlyphShapes) + " verbs with " +
                            std::to_string(count) + " depictable roles");
    }
    glyph_counts_.push_back(count);
    dominant_.push_back(static_cast<GlyphShape>(by_count_[count].size()));
    by_count_[count].push_back(v);
  }
}

VerbId ShapeWorld::verb_for(std::size_t glyph_count, GlyphShape dominant) const {
  const auto s = static_cast<std::size_t>(dominant);
  if (glyph_count >= by_count_.size() || s >= by_count_[glyph_count].size()) {
    throw ValidationError("shape world: no verb for " + std::to_string(glyph_count) + " glyphs led by a " +
                          kShapeNames.at(s));
  }
  return by_count_[glyph_count][s];
}

VerbId ShapeWorld::derive_verb(const Scene& scene) const {
  if (scene.glyphs.empty()) throw ValidationError("shape world: scene without glyphs");
  return verb_for(scene.glyphs.size(), scene.glyphs.front().shape);
}

NounId ShapeWorld::glyph_noun(GlyphShape shape, std::size_t color) const {
  return glyph_nouns_.at(static_cast<std::size_t>(shape) * kGlyphColors + color);
}

std::vector<NounId> ShapeWorld::synonyms(NounId noun) const {
  for (std::size_t s = 0; s < kGlyphShapes; ++s)
    for (std::size_t c = 0; c < kGlyphColors; ++c)
      if (glyph_noun(static_cast<GlyphShape>(s), c) == noun) {
        return {glyph_noun(static_cast<GlyphShape>(s), (c + 1) % kGlyphColors),
                glyph_noun(static_cast<GlyphShape>(s), (c + kGlyphColors - 1) % kGlyphColors)};
      }
  for (std::size_t b = 0; b < kBackgrounds; ++b)
    if (background_nouns_[b] == noun) {
      return {background_nouns_[(b + 1) % kBackgrounds], background_nouns_[(b + kBackgrounds - 1) % kBackgrounds]};
    }
  return {};
}

Image render_scene(const Scene& scene, std::size_t resolution, std::uint64_t noise_seed) {
  Rng rng = Rng::derive(noise_seed, {0x1A6E});
  Image img(resolution, resolution);
  const auto& bg = kBackgroundRgb.at(scene.background);
  auto jitter = [&] { return static_cast<int>(rng.uniform_index(2 * kPixelNoise + 1)) - kPixelNoise; };
  for (std::size_t y = 0; y < resolution; ++y)
    for (std::size_t x = 0; x < resolution; ++x)
      for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = clamp_byte(bg[c] + jitter());

  const double res = static_cast<double>(resolution);
  for (const Glyph& g : scene.glyphs) {
    const Corners k = g.box.corners();
    const auto x0 = static_cast<std::size_t>(std::lround(k.x1 * res));
    const auto x1 = static_cast<std::size_t>(std::lround(k.x2 * res));
    const auto y0 = static_cast<std::size_t>(std::lround(k.y1 * res));
    const auto y1 = static_cast<std::size_t>(std::lround(k.y2 * res));
    const double cx = (k.x1 + k.x2) * res / 2, cy = (k.y1 + k.y2) * res / 2;
    const double hw = (k.x2 - k.x1) * res / 2, hh = (k.y2 - k.y1) * res / 2;
    const auto& rgb = kColorRgb.at(g.color);
    for (std::size_t y = y0; y < y1; ++y) {
      for (std::size_t x = x0; x < x1; ++x) {
        const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
        bool inside = true;
        switch (g.shape) {
          case GlyphShape::Square:
            break;
          case GlyphShape::Disc: {
            const double dx = (px - cx) / hw, dy = (py - cy) / hh;
            inside = dx * dx + dy * dy <= 1.0;
            break;
          }
          case GlyphShape::Triangle: {
            const double t = (py - k.y1 * res) / (2 * hh);
            inside = std::abs(px - cx) <= t * hw;
            break;
          }
        }
        if (!inside) continue;
        for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = clamp_byte(rgb[c] + jitter());
      }
    }
  }
  return img;
}

namespace {

// Pixel-aligned glyph boxes so relative corners are exact multiples of 1/res.
Box draw_box(Rng& rng, double side, std::size_t resolution) {
  const double aspect = rng.uniform(0.8, 1.25);
  const double res = static_cast<double>(resolution);
  auto pw = static_cast<std::size_t>(std::lround(side * std::sqrt(aspect) * res));
  auto ph = static_cast<std::size_t>(std::lround(side / std::sqrt(aspect) * res));
  pw = std::clamp<std::size_t>(pw, 3, resolution);
  ph = std::clamp<std::size_t>(ph, 3, resolution);
  const std::size_t x = rng.uniform_index(resolution - pw + 1);
  const std::size_t y = rng.uniform_index(resolution - ph + 1);
  return Box::from_corners({static_cast<double>(x) / res, static_cast<double>(y) / res,
                            static_cast<double>(x + pw) / res, static_cast<double>(y + ph) / res});
}

std::array<NounId, kAnnotators> annotate(NounId truth, const ShapeWorld& world, double synonym_p, Rng& rng) {
  std::array<NounId, kAnnotators> out{truth, truth, truth};
  const auto pool = world.synonyms(truth);
  for (std::size_t k = 1; k < kAnnotators; ++k) {
    if (rng.bernoulli(synonym_p) && !pool.empty()) out[k] = pool[rng.uniform_index(pool.size())];
  }
  return out;
}

}  // namespace

std::vector<Sample> generate_dataset(const Ontology& ontology, const SyntheticConfig& config) {
  if (config.count == 0) throw ValidationError("generate_dataset: count must be positive");
  if (config.grid == 0 || config.grid > config.resolution) {
    throw ValidationError("generate_dataset: grid " + std::to_string(config.grid) + " larger than resolution " +
                          std::to_string(config.resolution));
  }
  if (config.resolution < kMinResolution) {
    throw ValidationError("generate_dataset: resolution must be at least " + std::to_string(kMinResolution) +
                          " pixels");
  }
  if (config.resolution % config.grid != 0) {
    throw ValidationError("generate_dataset: resolution " + std::to_string(config.resolution) +
                          " is not a multiple of grid " + std::to_string(config.grid));
  }
  const ShapeWorld world(ontology);
  std::vector<Sample> out;
  out.reserve(config.count);
  for (std::size_t i = 0; i < config.count; ++i) {
    Rng rng = Rng::derive(config.seed, {i});
    Sample s;
    const VerbId verb = rng.uniform_index(ontology.num_verbs());
    const std::size_t count = world.glyph_count(verb);
    s.scene.background = rng.uniform_index(kBackgrounds);
    double side = rng.uniform(0.34, 0.42);
    for (std::size_t g = 0; g < count; ++g) {
      Glyph glyph;
      glyph.shape = g == 0 ? world.dominant_shape(verb) : static_cast<GlyphShape>(rng.uniform_index(kGlyphShapes));
      glyph.color = rng.uniform_index(kGlyphColors);
      glyph.box = draw_box(rng, side, config.resolution);
      // Keep areas strictly ordered after pixel rounding.
      if (g > 0) {
        const Box& prev = s.scene.glyphs.back().box;
        for (int attempt = 0; glyph.box.w * glyph.box.h >= prev.w * prev.h; ++attempt) {
          if (attempt == 64) throw ValidationError("generate_dataset: cannot order glyph sizes at this resolution");
          side *= 0.93;
          glyph.box = draw_box(rng, side, config.resolution);
        }
      }
      s.scene.glyphs.push_back(glyph);
      side *= 0.78;
    }

    GroundedAnnotation& a = s.annotation;
    char id[16];
    std::snprintf(id, sizeof(id), "%06zu", i);
    a.image_id = id;
    a.verb = verb;
    std::size_t next_glyph = 0;
    for (RoleId role : ontology.frame(verb)) {
      RoleAnnotation r;
      r.role = role;
      if (world.is_glyph_role(role)) {
        const Glyph& g = s.scene.glyphs.at(next_glyph++);
        r.nouns = annotate(world.glyph_noun(g.shape, g.color), world, config.synonym_probability, rng);
        if (!rng.bernoulli(config.empty_box_fraction)) r.box = g.box;
      } else if (ontology.role_name(role) == kPlaceRole) {
        r.nouns = annotate(world.background_noun(s.scene.background), world, config.synonym_probability, rng);
      } else {
        r.nouns.fill(ontology.empty_noun());
      }
      a.roles.push_back(r);
    }
    s.image = render_scene(s.scene, config.resolution, splitmix64(config.seed ^ (i * 0x9E37ULL + 1)));
    out.push_back(std::move(s));
  }
  return out;
}

// ---- dataset directories ----------------------------------------------------

namespace {

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return fnv1a64(bytes.data(), bytes.size());
}

}  // namespace

DatasetManifest save_dataset(const std::filesystem::path& dir, const Ontology& ontology,
                             const std::vector<Sample>& samples, const SyntheticConfig& config) {
  std::filesystem::create_directories(dir / "images");
  ontology.save(dir / "ontology.json");
  std::vector<GroundedAnnotation> annotations;
  for (const auto& s : samples) {
    annotations.push_back(s.annotation);
    write_ppm(dir / "images" / (s.annotation.image_id + ".ppm"), s.image);
  }
  save_annotations(dir / "annotations.jsonl", annotations, ontology);

  DatasetManifest m;
  m.count = samples.size();
  m.grid = config.grid;
  m.resolution = config.resolution;
  m.seed = config.seed;
  m.ontology_hash = ontology.hash();
  m.annotations_hash = file_hash(dir / "annotations.jsonl");
  ojson doc;
  doc["count"] = m.count;
  doc["seed"] = m.seed;
  doc["grid"] = m.grid;
  doc["resolution"] = m.resolution;
  doc["empty_box_fraction"] = config.empty_box_fraction;
  doc["synonym_probability"] = config.synonym_probability;
  doc["ontology_hash"] = hex64(m.ontology_hash);
  doc["annotations_hash"] = hex64(m.annotations_hash);
  doc["annotations"] = "annotations.jsonl";
  doc["images"] = "images";
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << doc.dump(2) << '\n';
  return m;
}

LoadedDataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("not a dataset directory (no manifest.json): " + dir.string());
  LoadedDataset ds;
  try {
    const ojson doc = ojson::parse(in);
    ds.manifest.count = doc.at("count").get<std::size_t>();
    ds.manifest.seed = doc.at("seed").get<std::uint64_t>();
    ds.manifest.grid = doc.at("grid").get<std::size_t>();
    ds.manifest.resolution = doc.at("resolution").get<std::size_t>();
    ds.manifest.ontology_hash = std::stoull(doc.at("ontology_hash").get<std::string>(), nullptr, 16);
    ds.manifest.annotations_hash = std::stoull(doc.at("annotations_hash").get<std::string>(), nullptr, 16);
  } catch (const std::exception& e) {
    throw ValidationError("dataset manifest " + (dir / "manifest.json").string() + ": " + e.what());
  }
  ds.ontology = Ontology::load(dir / "ontology.json");
  if (ds.ontology.hash() != ds.manifest.ontology_hash) {
    throw ValidationError("dataset " + dir.string() + ": ontology does not match the manifest hash");
  }
  for (auto& a : load_annotations(dir / "annotations.jsonl", ds.ontology)) {
    Sample s;
    s.image = read_ppm(dir / "images" / (a.image_id + ".ppm"));
    if (s.image.height != ds.manifest.resolution || s.image.width != ds.manifest.resolution) {
      throw ValidationError("image \"" + a.image_id + "\": raster size differs from the manifest resolution");
    }
    s.annotation = std::move(a);
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.size() != ds.manifest.count) {
    throw ValidationError("dataset " + dir.string() + ": manifest count disagrees with the annotation file");
  }
  return ds;
}

// ---- augmentation -----------------------------------------------------------

AugmentDecision draw_augmentation(std::uint64_t seed) {
  Rng rng = Rng::derive(seed, {0xA06});
  AugmentDecision d;
  d.flip = rng.bernoulli(0.5);
  d.scale = kAugmentScales[rng.uniform_index(kAugmentScales.size())];
  return d;
}

std::pair<Image, GroundedAnnotation> apply_augmentation(const Image& image, const GroundedAnnotation& annotation,
                                                        const AugmentDecision& decision) {
  Image img = image;
  GroundedAnnotation a = annotation;
  if (decision.flip) {
    img = flip_horizontal(img);
    for (auto& r : a.roles)
      if (r.box) r.box->cx = 1.0 - r.box->cx;
  }
  if (decision.scale != 1.0) {
    const auto h = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(img.height * decision.scale)));
    const auto w = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(img.width * decision.scale)));
    img = resize_nearest(resize_nearest(img, h, w), image.height, image.width);
  }
  return {std::move(img), std::move(a)};
}

std::pair<Image, GroundedAnnotation> augment(const Image& image, const GroundedAnnotation& annotation,
                                             std::uint64_t seed) {
  return apply_augmentation(image, annotation, draw_augmentation(seed));
}

// ---- patch embedder ---------------------------------------------------------

template <class T>
PatchEmbedder<T> PatchEmbedder<T>::create(std::size_t patch, std::size_t d, Rng& rng) {
  return PatchEmbedder{nn::Linear<T>::create(patch * patch * 3, d, rng), patch};
}

template <class T>
Tensor<T> patchify(const Image& image, std::size_t patch) {
  if (patch == 0 || image.height % patch != 0 || image.width % patch != 0) {
    throw ValidationError("patchify: image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                          " is not divisible into " + std::to_string(patch) + "-pixel patches");
  }
  const std::size_t gh = image.height / patch, gw = image.width / patch, cols = patch * patch * 3;
  std::vector<T> v(gh * gw * cols);
  for (std::size_t i = 0; i < gh; ++i)
    for (std::size_t j = 0; j < gw; ++j) {
      T* row = v.data() + (i * gw + j) * cols;
      for (std::size_t py = 0; py < patch; ++py)
        for (std::size_t px = 0; px < patch; ++px)
          for (std::size_t c = 0; c < 3; ++c)
            row[(py * patch + px) * 3 + c] = static_cast<T>(image.at(i * patch + py, j * patch + px, c)) / T(255);
    }
  return Tensor<T>({gh * gw, cols}, std::move(v));
}

template <class T>
FeatureGrid<T> embed_image(const Image& image, const PatchEmbedder<T>& embedder, std::string image_id) {
  FeatureGrid<T> grid;
  grid.image_id = std::move(image_id);
  grid.features = embedder.projection.forward(patchify<T>(image, embedder.patch));
  grid.height = image.height / embedder.patch;
  grid.width = image.width / embedder.patch;
  return grid;
}

template struct PatchEmbedder<float>;
template struct PatchEmbedder<double>;
template Tensor<float> patchify<float>(const Image&, std::size_t);
template Tensor<double> patchify<double>(const Image&, std::size_t);
template FeatureGrid<float> embed_image(const Image&, const PatchEmbedder<float>&, std::string);
template FeatureGrid<double> embed_image(const Image&, const PatchEmbedder<double>&, std::string);

}  // namespace coformer
