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

#include "coformer_cli/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "coformer/config.hpp"
#include "coformer/dataset.hpp"
#include "coformer/diagnostics.hpp"
#include "coformer/error.hpp"
#include "coformer/eval.hpp"
#include "coformer/model.hpp"
#include "coformer/train.hpp"
#include "json.hpp"

namespace coformer::cli {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

// Usage problems detected after parsing (existing output, missing input).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
}

void prepare_output(const fs::path& dir, bool force, bool allow_existing = false) {
  if (fs::exists(dir) && !fs::is_empty(dir) && !force && !allow_existing) {
    throw UsageError("output directory " + dir.string() + " already exists; pass --force to overwrite");
  }
  fs::create_directories(dir);
}

// Configuration file: {"ontology", "model", "train", "loss", "ablate"}.
struct RunConfig {
  std::string command;
  std::string config_path;
  ojson file = ojson::object();
  ModelConfig model;
  TrainConfig train;
  LossConfig loss;
  ojson extra = ojson::object();

  void load_file(const std::string& explicit_path) {
    config_path = explicit_path;
    if (config_path.empty()) {
      if (const char* env = std::getenv(kConfigEnv); env != nullptr && *env != '\0') config_path = env;
    }
    if (config_path.empty()) return;
    try {
      file = ojson::parse(read_text(config_path));
    } catch (const ojson::parse_error& e) {
      throw ValidationError("config " + config_path + ": malformed JSON: " + e.what());
    }
    if (!file.is_object()) throw ValidationError("config " + config_path + " must be a JSON object");
    for (const auto& [key, _] : file.items()) {
      if (key != "ontology" && key != "model" && key != "train" && key != "loss" && key != "ablate") {
        throw ValidationError("config " + config_path + ": unknown section \"" + key + "\"");
      }
    }
    if (file.contains("model")) model = model_config_from_json(file["model"].dump(), model);
    if (file.contains("train")) train = train_config_from_json(file["train"].dump(), train);
    if (file.contains("loss")) loss = loss_config_from_json(file["loss"].dump(), loss);
    if (file.contains("ablate")) {
      for (const auto& name : file["ablate"]) enable_ablation(model.ablations, name.get<std::string>());
    }
  }

  std::string file_ontology() const {
    return file.contains("ontology") ? file["ontology"].get<std::string>() : std::string();
  }

  void save(const fs::path& dir) const {
    ojson doc;
    doc["command"] = command;
    doc["config_file"] = config_path;
    doc["model"] = ojson::parse(to_json(model));
    doc["train"] = ojson::parse(to_json(train));
    doc["loss"] = ojson::parse(to_json(loss));
    doc["ablate"] = ablation_names(model.ablations);
    for (const auto& [key, value] : extra.items()) doc[key] = value;
    write_text(dir / "run_config.json", doc.dump(2));
  }
};

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Fits grid and patch to the data's rasters unless the config set them.
void fit_grid(ModelConfig& model, const ojson& file_model, const DatasetManifest& m) {
  if (!file_model.contains("grid_h")) model.grid_h = m.grid;
  if (!file_model.contains("grid_w")) model.grid_w = m.grid;
  if (!file_model.contains("patch")) model.patch = m.resolution / m.grid;
  if (model.image_height() != m.resolution || model.image_width() != m.resolution) {
    throw ValidationError("model grid " + std::to_string(model.grid_h) + "x" + std::to_string(model.grid_w) +
                          " with patch " + std::to_string(model.patch) + " does not tile " +
                          std::to_string(m.resolution) + "-pixel images");
  }
}

// ---- gen-data ---------------------------------------------------------------

struct GenDataArgs {
  std::string ontology, out, config;
  SyntheticConfig data;
  bool force = false;
};

int gen_data(const GenDataArgs& a, std::ostream& out) {
  RunConfig rc;
  rc.command = "gen-data";
  rc.load_file(a.config);
  const std::string ontology_path = !a.ontology.empty() ? a.ontology : rc.file_ontology();
  const Ontology ontology = ontology_path.empty() ? synthetic_ontology() : Ontology::load(ontology_path);
  const auto samples = generate_dataset(ontology, a.data);
  prepare_output(a.out, a.force);
  const DatasetManifest m = save_dataset(a.out, ontology, samples, a.data);
  rc.extra["ontology"] = ontology_path.empty() ? "<synthetic>" : ontology_path;
  rc.extra["data"] = ojson::parse(to_json(a.data));
  rc.save(a.out);
  out << "wrote " << m.count << " samples to " << a.out << " (ontology " << hex64(m.ontology_hash) << ")\n";
  return kSuccess;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string config, data, dev, out, resume;
  std::vector<std::string> ablate;
  std::optional<std::size_t> steps, epochs, batch, checkpoint_every;
  std::optional<double> lr, lr_backbone;
  std::optional<std::uint64_t> seed;
  bool no_augment = false, force = false;
};

int train(const TrainArgs& a, std::ostream& out) {
  RunConfig rc;
  rc.command = "train";
  const LoadedDataset data = load_dataset(a.data);
  std::optional<LoadedDataset> dev;
  if (!a.dev.empty()) {
    dev = load_dataset(a.dev);
    if (!(dev->ontology == data.ontology)) throw ValidationError("dev set ontology differs from the training set");
  }

  std::optional<Checkpoint> resumed;
  if (!a.resume.empty()) {
    resumed = load_checkpoint(a.resume);
    if (!(resumed->ontology == data.ontology)) {
      throw ValidationError("checkpoint ontology differs from the training data ontology");
    }
    rc.model = resumed->model;
    rc.train = resumed->train;
    rc.loss = resumed->loss;
    if (!a.ablate.empty() || !a.config.empty()) {
      throw UsageError("--resume takes model, loss and ablation settings from the checkpoint");
    }
  } else {
    rc.load_file(a.config);
    fit_grid(rc.model, rc.file.contains("model") ? rc.file["model"] : ojson::object(), data.manifest);
    for (const auto& name : a.ablate) enable_ablation(rc.model.ablations, name);
    rc.model = ModelConfig::for_ontology(data.ontology, rc.model);
  }
  if (a.steps) rc.train.max_steps = *a.steps;
  if (a.epochs) rc.train.epochs = *a.epochs;
  if (a.batch) rc.train.batch_size = *a.batch;
  if (a.lr) rc.train.lr_main = *a.lr;
  if (a.lr_backbone) rc.train.lr_backbone = *a.lr_backbone;
  if (a.seed && !resumed) rc.train.seed = *a.seed;
  if (a.no_augment) rc.train.augment = false;
  if (rc.train.lr_drop_epoch > rc.train.epochs) rc.train.lr_drop_epoch = rc.train.epochs;
  rc.train.validate();

  prepare_output(a.out, a.force, resumed.has_value());
  rc.extra["data"] = a.data;
  rc.extra["dev"] = a.dev;
  rc.extra["resume"] = a.resume;
  rc.save(a.out);

  std::optional<Trainer> trainer;
  if (resumed) {
    resumed->train = rc.train;
    trainer.emplace(std::move(*resumed));
  } else {
    trainer.emplace(data.ontology, rc.model, rc.train, rc.loss);
  }
  TrainOutputs outputs;
  outputs.directory = a.out;
  outputs.checkpoint_every = a.checkpoint_every.value_or(1);
  const auto logs = trainer->run(data.samples, dev ? &dev->samples : nullptr, outputs);
  out << "trained " << logs.size() << " steps (total " << trainer->completed_steps() << ")";
  if (!logs.empty()) out << ", last loss " << logs.back().loss.total;
  out << "\n";
  return kSuccess;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint, data, out, predictions;
  bool force = false;
};

int eval(const EvalArgs& a, std::ostream& out) {
  RunConfig rc;
  rc.command = "eval";
  const LoadedDataset data = load_dataset(a.data);
  std::vector<PredictionRecord> predictions;
  if (!a.checkpoint.empty()) {
    const Checkpoint cp = load_checkpoint(a.checkpoint);
    if (!(cp.ontology == data.ontology)) {
      throw ValidationError("frame mismatch: checkpoint ontology " + hex64(cp.ontology.hash()) +
                            " differs from data ontology " + hex64(data.ontology.hash()));
    }
    rc.model = cp.model;
    rc.train = cp.train;
    rc.loss = cp.loss;
    if (a.predictions.empty()) predictions = evaluate_model(cp.weights, cp.model, cp.ontology, data.samples).predictions;
  } else if (a.predictions.empty()) {
    throw UsageError("eval needs --checkpoint or --predictions");
  }
  if (!a.predictions.empty()) predictions = load_predictions(a.predictions, data.ontology);

  std::vector<GroundedAnnotation> annotations;
  for (const auto& s : data.samples) annotations.push_back(s.annotation);
  const MetricReport report = evaluate(predictions, annotations, data.ontology);

  prepare_output(a.out, a.force);
  write_text(fs::path(a.out) / "metrics.json", report.to_json());
  save_predictions(fs::path(a.out) / "predictions.jsonl", predictions, data.ontology);
  rc.extra["checkpoint"] = a.checkpoint;
  rc.extra["data"] = a.data;
  rc.extra["predictions"] = a.predictions;
  rc.save(a.out);

  out << std::fixed << std::setprecision(2);
  for (Setting s : kSettings) {
    const auto& m = report.at(s);
    out << setting_name(s) << ":";
    if (m.verb) out << " verb " << *m.verb;
    out << " value " << m.value << " value-all " << m.value_all << " grnd-value " << m.grounded_value
        << " grnd-value-all " << m.grounded_value_all << "\n";
  }
  return kSuccess;
}

// ---- retrieve ---------------------------------------------------------------

struct RetrieveArgs {
  std::string predictions, query_id, ontology, data, out;
  std::size_t k = 5;
  bool force = false;
};

int retrieve_cmd(const RetrieveArgs& a, std::ostream& out) {
  RunConfig rc;
  rc.command = "retrieve";
  Ontology ontology;
  if (!a.ontology.empty()) {
    ontology = Ontology::load(a.ontology);
  } else if (!a.data.empty()) {
    ontology = Ontology::load(fs::path(a.data) / "ontology.json");
  } else {
    throw UsageError("retrieve needs --ontology or --data");
  }
  const auto corpus = load_predictions(a.predictions, ontology);
  const auto it = std::find_if(corpus.begin(), corpus.end(),
                               [&](const PredictionRecord& r) { return r.image_id == a.query_id; });
  if (it == corpus.end()) throw ValidationError("query id \"" + a.query_id + "\" not in the prediction file");
  const auto hits = retrieve(*it, corpus, a.k, ontology);
  ojson doc;
  doc["query"] = a.query_id;
  doc["k"] = a.k;
  ojson results = ojson::array();
  for (const auto& h : hits) results.push_back({{"image_id", h.image_id}, {"score", h.score}});
  doc["results"] = std::move(results);
  out << doc.dump(2) << "\n";
  if (!a.out.empty()) {
    prepare_output(a.out, a.force);
    write_text(fs::path(a.out) / "retrieval.json", doc.dump(2));
    rc.extra["predictions"] = a.predictions;
    rc.extra["query_id"] = a.query_id;
    rc.extra["k"] = a.k;
    rc.save(a.out);
  }
  return kSuccess;
}

// ---- gradcheck --------------------------------------------------------------

struct GradcheckArgs {
  std::uint64_t seed = 0;
  std::size_t coords = 48;
  double tolerance_scale = 1.0;
  std::string out;
  bool force = false;
};

int gradcheck(const GradcheckArgs& a, std::ostream& out) {
  const double k = a.tolerance_scale;
  std::vector<CheckOutcome> all = primitive_gradchecks(a.seed, 1e-6 * k);
  for (auto& c : loss_gradchecks(a.seed, 1e-4 * k)) all.push_back(c);
  all.push_back(model_gradcheck(a.seed, 1e-3 * k, a.coords));
  bool ok = true;
  ojson rows = ojson::array();
  for (const auto& c : all) {
    char line[256];
    std::snprintf(line, sizeof(line), "%-20s %12.3e  tol %8.1e  %s  %s\n", c.name.c_str(), c.max_rel_error,
                  c.tolerance, c.passed ? "PASS" : "FAIL", c.detail.c_str());
    out << line;
    ok = ok && c.passed;
    rows.push_back({{"name", c.name},
                    {"max_rel_error", c.max_rel_error},
                    {"tolerance", c.tolerance},
                    {"passed", c.passed},
                    {"detail", c.detail}});
  }
  if (!a.out.empty()) {
    prepare_output(a.out, a.force);
    write_text(fs::path(a.out) / "gradcheck.json", rows.dump(2));
    RunConfig rc;
    rc.command = "gradcheck";
    rc.extra["seed"] = a.seed;
    rc.extra["coords"] = a.coords;
    rc.extra["tolerance_scale"] = a.tolerance_scale;
    rc.save(a.out);
  }
  out << (ok ? "all gradient checks passed\n" : "gradient check failures\n");
  return ok ? kSuccess : kNumerical;
}

// ---- attn -------------------------------------------------------------------

struct AttnArgs {
  std::string checkpoint, image, out;
  bool force = false;
};

ojson map_json(const nn::AttentionMap& m, std::size_t first_row, std::size_t rows) {
  ojson weights = ojson::array();
  for (std::size_t r = first_row; r < first_row + rows; ++r) {
    weights.push_back(std::vector<double>(m.weights.begin() + static_cast<std::ptrdiff_t>(r * m.cols),
                                          m.weights.begin() + static_cast<std::ptrdiff_t>((r + 1) * m.cols)));
  }
  return {{"module", m.module}, {"layer", m.layer}, {"head", m.head}, {"rows", rows}, {"cols", m.cols},
          {"weights", std::move(weights)}};
}

int attn(const AttnArgs& a, std::ostream& out) {
  const Checkpoint cp = load_checkpoint(a.checkpoint);
  const Image image = read_ppm(a.image);
  if (image.height != cp.model.image_height() || image.width != cp.model.image_width()) {
    throw ValidationError("image " + a.image + " is " + std::to_string(image.height) + "x" +
                          std::to_string(image.width) + ", the checkpoint expects " +
                          std::to_string(cp.model.image_height()) + "x" + std::to_string(cp.model.image_width()));
  }
  const std::string id = fs::path(a.image).stem().string();
  nn::AttentionRecorder recorder;
  const PredictionRecord pred = predict(cp.weights, cp.model, cp.ontology, image, id, std::nullopt, &recorder);

  ojson maps = ojson::object();
  std::size_t last_glance = 0, last_s1 = 0;
  for (const auto& m : recorder.maps) {
    if (m.module == "glance") last_glance = std::max(last_glance, m.layer);
    if (m.module == "gaze_s1/encoder") last_s1 = std::max(last_s1, m.layer);
  }
  ojson highlights = ojson::object();
  for (const auto& m : recorder.maps) {
    maps[m.module + "/" + std::to_string(m.layer) + "/" + std::to_string(m.head)] = map_json(m, 0, m.rows);
    if (m.module == "glance" && m.layer == last_glance) {
      // IL token is the last row; columns are the hw cells followed by IL itself.
      highlights["glance/last/head" + std::to_string(m.head) + "/il_row"] = map_json(m, m.rows - 1, 1);
    }
    if (m.module == "gaze_s1/encoder" && m.layer == last_s1) {
      highlights["gaze_s1/encoder/last/head" + std::to_string(m.head) + "/rl_row"] = map_json(m, m.rows - 1, 1);
    }
  }
  ojson doc;
  doc["image_id"] = id;
  doc["grid"] = {cp.model.grid_h, cp.model.grid_w};
  doc["predicted_verb"] = cp.ontology.verb_name(pred.top_verbs.front());
  doc["roles"] = cp.ontology.roles();
  doc["highlights"] = std::move(highlights);
  doc["maps"] = std::move(maps);

  prepare_output(a.out, a.force);
  write_text(fs::path(a.out) / "attention.json", doc.dump());
  RunConfig rc;
  rc.command = "attn";
  rc.model = cp.model;
  rc.train = cp.train;
  rc.loss = cp.loss;
  rc.extra["checkpoint"] = a.checkpoint;
  rc.extra["image"] = a.image;
  rc.save(a.out);
  out << "wrote " << recorder.maps.size() << " attention maps for " << id << "\n";
  return kSuccess;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"CoFormer grounded situation recognition toolkit", "coformer"};
  app.require_subcommand(1);

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic shape-world dataset");
  gen->add_option("--ontology", gd.ontology, "Ontology JSON (default: built-in synthetic ontology)");
  gen->add_option("--config", gd.config, "Run configuration JSON");
  gen->add_option("--out", gd.out, "Output directory")->required();
  gen->add_option("--count", gd.data.count, "Number of samples")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gd.data.seed, "Generator seed");
  gen->add_option("--grid", gd.data.grid, "Feature grid side")->check(CLI::PositiveNumber);
  gen->add_option("--res", gd.data.resolution, "Image side in pixels")->check(CLI::PositiveNumber);
  gen->add_option("--empty-box-fraction", gd.data.empty_box_fraction, "Fraction of glyph roles without a box")
      ->check(CLI::Range(0.0, 1.0));
  gen->add_option("--synonym-probability", gd.data.synonym_probability, "Annotator synonym probability")
      ->check(CLI::Range(0.0, 1.0));
  gen->add_flag("--force", gd.force, "Overwrite an existing output directory");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--config", ta.config, "Run configuration JSON (default: $" + std::string(kConfigEnv) + ")");
  tr->add_option("--data", ta.data, "Training dataset directory")->required();
  tr->add_option("--dev", ta.dev, "Dev dataset directory for per-epoch evaluation");
  tr->add_option("--out", ta.out, "Output directory")->required();
  tr->add_option("--ablate", ta.ablate, "Ablation switch (gaze_s1|gaze_s2|aux_noun|grad_flow|verb_token)");
  tr->add_option("--resume", ta.resume, "Checkpoint prefix to continue from");
  tr->add_option("--steps", ta.steps, "Total optimizer steps (overrides epochs)");
  tr->add_option("--epochs", ta.epochs, "Epochs")->check(CLI::PositiveNumber);
  tr->add_option("--batch", ta.batch, "Batch size")->check(CLI::PositiveNumber);
  tr->add_option("--lr", ta.lr, "Main learning rate");
  tr->add_option("--lr-backbone", ta.lr_backbone, "Patch embedder learning rate");
  tr->add_option("--seed", ta.seed, "Training seed");
  tr->add_option("--checkpoint-every", ta.checkpoint_every, "Epochs between checkpoints")->check(CLI::PositiveNumber);
  tr->add_flag("--no-augment", ta.no_augment, "Disable flip and scale augmentation");
  tr->add_flag("--force", ta.force, "Overwrite an existing output directory");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Score a checkpoint or a prediction file");
  ev->add_option("--checkpoint", ea.checkpoint, "Checkpoint prefix");
  ev->add_option("--data", ea.data, "Dataset directory")->required();
  ev->add_option("--out", ea.out, "Output directory")->required();
  ev->add_option("--predictions", ea.predictions, "Score this prediction file instead of running the model");
  ev->add_flag("--force", ea.force, "Overwrite an existing output directory");

  RetrieveArgs ra;
  auto* re = app.add_subcommand("retrieve", "Rank images by grounded situation similarity");
  re->add_option("--predictions", ra.predictions, "Prediction file")->required();
  re->add_option("--query-id", ra.query_id, "Query image id")->required();
  re->add_option("--k", ra.k, "Number of results")->check(CLI::PositiveNumber);
  re->add_option("--ontology", ra.ontology, "Ontology JSON");
  re->add_option("--data", ra.data, "Dataset directory providing ontology.json");
  re->add_option("--out", ra.out, "Optional output directory");
  re->add_flag("--force", ra.force, "Overwrite an existing output directory");

  GradcheckArgs ga;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gc->add_option("--seed", ga.seed, "Fixture seed");
  gc->add_option("--coords", ga.coords, "Coordinates probed per model tensor (0 = all)");
  gc->add_option("--tolerance-scale", ga.tolerance_scale, "Multiplier on every tolerance")
      ->check(CLI::NonNegativeNumber);
  gc->add_option("--out", ga.out, "Optional output directory");
  gc->add_flag("--force", ga.force, "Overwrite an existing output directory");

  AttnArgs aa;
  auto* at = app.add_subcommand("attn", "Dump attention maps for one image");
  at->add_option("--checkpoint", aa.checkpoint, "Checkpoint prefix")->required();
  at->add_option("--image", aa.image, "PPM image")->required();
  at->add_option("--out", aa.out, "Output directory")->required();
  at->add_flag("--force", aa.force, "Overwrite an existing output directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsage;
  }

  try {
    if (gen->parsed()) return gen_data(gd, out);
    if (tr->parsed()) return train(ta, out);
    if (ev->parsed()) return eval(ea, out);
    if (re->parsed()) return retrieve_cmd(ra, out);
    if (gc->parsed()) return gradcheck(ga, out);
    if (at->parsed()) return attn(aa, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  }
  return kUsage;
}

}  // namespace coformer::cli
