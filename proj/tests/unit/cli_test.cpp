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

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "coformer/dataset.hpp"
#include "coformer/eval.hpp"
#include "coformer_cli/cli.hpp"
#include "fixtures.hpp"
#include "json.hpp"

namespace coformer::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct Result {
  int code = 0;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

json read_json(const fs::path& p) { return json::parse(testing::read_file(p)); }

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += line.empty() ? 0 : 1;
  return n;
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::ScratchDir("cli");
    ASSERT_EQ(invoke({"gen-data", "--out", (*dir_ / "data").string(), "--count", "8", "--seed", "3", "--grid", "4",
                      "--res", "32"})
                  .code,
              0);
    std::ofstream cfg(*dir_ / "tiny.json");
    cfg << R"({"model": {"d": 16, "heads": 2}, "train": {"batch_size": 4, "lr_main": 0.001}})";
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static fs::path path(const std::string& leaf) { return *dir_ / leaf; }
  static std::string data() { return path("data").string(); }
  static std::string config() { return path("tiny.json").string(); }

  static testing::ScratchDir* dir_;
};

testing::ScratchDir* CliTest::dir_ = nullptr;

TEST_F(CliTest, GenDataIsDeterministic) {
  for (const char* leaf : {"g1", "g2"}) {
    ASSERT_EQ(invoke({"gen-data", "--out", path(leaf).string(), "--count", "64", "--seed", "7"}).code, 0);
  }
  EXPECT_EQ(testing::read_file(path("g1") / "manifest.json"), testing::read_file(path("g2") / "manifest.json"));
  EXPECT_EQ(testing::read_file(path("g1") / "annotations.jsonl"), testing::read_file(path("g2") / "annotations.jsonl"));
  const json m = read_json(path("g1") / "manifest.json");
  EXPECT_EQ(m["count"], 64);
  EXPECT_TRUE(m.contains("ontology_hash"));
  EXPECT_TRUE(fs::exists(path("g1") / "run_config.json"));
}

TEST_F(CliTest, GenDataRejectsZeroCountAndExistingDirectory) {
  EXPECT_EQ(invoke({"gen-data", "--out", path("z").string(), "--count", "0"}).code, kUsage);
  EXPECT_EQ(invoke({"gen-data", "--out", data(), "--count", "4"}).code, kUsage);
  EXPECT_EQ(invoke({"frobnicate"}).code, kUsage);
  EXPECT_EQ(invoke({}).code, kUsage);
}

TEST_F(CliTest, TrainWritesLogsAndResumes) {
  const auto out = path("train").string();
  auto r = invoke({"train", "--config", config(), "--data", data(), "--out", out, "--steps", "4"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(path("train") / "loss_log.jsonl"), 4u);
  const json rc = read_json(path("train") / "run_config.json");
  EXPECT_EQ(rc["model"]["d"], 16);
  EXPECT_EQ(rc["model"]["grid_h"], 4);
  EXPECT_DOUBLE_EQ(rc["train"]["lr_main"].get<double>(), 1e-3);

  r = invoke({"train", "--data", data(), "--out", out, "--resume", (path("train") / "last").string(), "--steps", "6"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(path("train") / "loss_log.jsonl"), 6u);
  const json last = read_json(path("train") / "last.json");
  EXPECT_EQ(last["state"]["step"], 6);
}

TEST_F(CliTest, TrainAblationNames) {
  auto r = invoke({"train", "--config", config(), "--data", data(), "--out", path("bad").string(), "--ablate", "gaze"});
  EXPECT_EQ(r.code, kValidation);
  for (const char* name : {"gaze_s1", "gaze_s2", "aux_noun", "grad_flow", "verb_token"})
    EXPECT_NE(r.err.find(name), std::string::npos) << name;
  r = invoke({"train", "--config", config(), "--data", data(), "--out", path("abl").string(), "--ablate",
              "verb_token", "--steps", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json rc = read_json(path("abl") / "run_config.json");
  EXPECT_EQ(rc["ablate"], json::array({"verb_token"}));
  EXPECT_TRUE(rc["model"]["no_verb_token"].get<bool>());
}

TEST_F(CliTest, EvalOracleBypassScoresHundred) {
  const LoadedDataset ds = load_dataset(data());
  std::vector<PredictionRecord> preds;
  for (const auto& s : ds.samples) preds.push_back(oracle_prediction(s.annotation, ds.ontology));
  save_predictions(path("oracle.jsonl"), preds, ds.ontology);
  const auto r = invoke({"eval", "--data", data(), "--out", path("eval_oracle").string(), "--predictions",
                         path("oracle.jsonl").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json m = read_json(path("eval_oracle") / "metrics.json");
  ASSERT_EQ(m["numbers"].size(), 14u);
  for (const auto& v : m["numbers"]) EXPECT_DOUBLE_EQ(v.get<double>(), 100.0);
  EXPECT_EQ(count_lines(path("eval_oracle") / "predictions.jsonl"), 8u);
}

TEST_F(CliTest, EvalCheckpointIsDeterministic) {
  ASSERT_EQ(invoke({"train", "--config", config(), "--data", data(), "--out", path("ev_train").string(), "--steps",
                    "2"})
                .code,
            0);
  const auto ckpt = (path("ev_train") / "last").string();
  for (const char* leaf : {"ev1", "ev2"}) {
    const auto r = invoke({"eval", "--checkpoint", ckpt, "--data", data(), "--out", path(leaf).string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  EXPECT_EQ(testing::read_file(path("ev1") / "metrics.json"), testing::read_file(path("ev2") / "metrics.json"));
  EXPECT_EQ(testing::read_file(path("ev1") / "predictions.jsonl"),
            testing::read_file(path("ev2") / "predictions.jsonl"));
}

TEST_F(CliTest, EvalRejectsOntologyMismatch) {
  ASSERT_EQ(invoke({"train", "--config", config(), "--data", data(), "--out", path("mm_train").string(), "--steps",
                    "1"})
                .code,
            0);
  const auto mowing = path("mowing.json");
  testing::mowing_ontology().save(mowing);
  EXPECT_EQ(invoke({"gen-data", "--out", path("mow").string(), "--count", "2", "--ontology", mowing.string()}).code,
            kValidation);
  auto onto = read_json(path("data") / "ontology.json");
  onto["nouns"].push_back("spare");
  std::ofstream(path("variant.json")) << onto.dump();
  ASSERT_EQ(invoke({"gen-data", "--out", path("variant").string(), "--count", "4", "--grid", "4", "--res", "32",
                    "--ontology", path("variant.json").string()})
                .code,
            0);
  const auto ckpt = (path("mm_train") / "last").string();
  EXPECT_EQ(invoke({"eval", "--checkpoint", ckpt, "--data", data(), "--out", path("mm_ok").string()}).code, 0);
  const auto bad = invoke({"eval", "--checkpoint", ckpt, "--data", path("variant").string(), "--out",
                           path("mm_bad").string()});
  EXPECT_EQ(bad.code, kValidation);
  EXPECT_NE(bad.err.find("mismatch"), std::string::npos) << bad.err;
}

TEST_F(CliTest, RetrieveRanksSelfFirst) {
  const LoadedDataset ds = load_dataset(data());
  std::vector<PredictionRecord> preds;
  for (const auto& s : ds.samples) preds.push_back(oracle_prediction(s.annotation, ds.ontology));
  save_predictions(path("ret.jsonl"), preds, ds.ontology);
  const auto id = ds.samples[3].annotation.image_id;
  auto r = invoke({"retrieve", "--predictions", path("ret.jsonl").string(), "--query-id", id, "--k", "50", "--data",
                   data()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json doc = json::parse(r.out);
  ASSERT_EQ(doc["results"].size(), 8u);
  EXPECT_EQ(doc["results"][0]["image_id"], id);
  EXPECT_DOUBLE_EQ(doc["results"][0]["score"].get<double>(), 2.0);
  for (std::size_t i = 1; i < doc["results"].size(); ++i)
    EXPECT_LE(doc["results"][i]["score"].get<double>(), doc["results"][i - 1]["score"].get<double>());
  r = invoke({"retrieve", "--predictions", path("ret.jsonl").string(), "--query-id", "nope", "--data", data()});
  EXPECT_EQ(r.code, kValidation);
}

TEST_F(CliTest, GradcheckPassesAndFailsLoudly) {
  auto r = invoke({"gradcheck", "--seed", "1"});
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("model_total_loss"), std::string::npos);
  r = invoke({"gradcheck", "--seed", "1", "--tolerance-scale", "0"});
  EXPECT_EQ(r.code, kNumerical);
  EXPECT_NE(r.out.find("FAIL"), std::string::npos);
}

TEST_F(CliTest, AttentionDump) {
  ASSERT_EQ(invoke({"train", "--config", config(), "--data", data(), "--out", path("at_train").string(), "--steps",
                    "1"})
                .code,
            0);
  const LoadedDataset ds = load_dataset(data());
  const auto image = (path("data") / "images" / (ds.samples[0].annotation.image_id + ".ppm")).string();
  const auto r = invoke({"attn", "--checkpoint", (path("at_train") / "last").string(), "--image", image, "--out",
                         path("attn").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json doc = read_json(path("attn") / "attention.json");
  const auto& hl = doc["highlights"];
  for (int h = 0; h < 2; ++h) {
    const auto& il = hl["glance/last/head" + std::to_string(h) + "/il_row"];
    EXPECT_EQ(il["cols"], 16 + 1);
    const auto& rl = hl["gaze_s1/encoder/last/head" + std::to_string(h) + "/rl_row"];
    EXPECT_EQ(rl["cols"], ds.ontology.num_roles() + 1);
  }
  for (const auto& [key, m] : doc["maps"].items()) {
    for (const auto& row : m["weights"]) {
      double s = 0.0;
      for (const auto& w : row) s += w.get<double>();
      EXPECT_NEAR(s, 1.0, 1e-5) << key;
    }
  }
}

}  // namespace
}  // namespace coformer::cli
