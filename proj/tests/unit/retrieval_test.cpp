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

#include "coformer/error.hpp"
#include "coformer/eval.hpp"
#include "fixtures.hpp"

namespace coformer {
namespace {

struct RetrievalFixture : ::testing::Test {
  Ontology o = synthetic_ontology();

  // Frames for every listed verb, each role grounded on one shared box.
  PredictionRecord record(const std::string& id, std::vector<VerbId> verbs, NounId noun = 0) const {
    PredictionRecord p;
    p.image_id = id;
    p.top_verbs = verbs;
    for (VerbId v : verbs) {
      FramePrediction f;
      f.verb = v;
      for (std::size_t k = 0; k < o.frame(v).size(); ++k) f.roles.push_back({noun, Corners{0.1, 0.1, 0.5, 0.6}, 0.9});
      p.frames.push_back(f);
    }
    return p;
  }
};

TEST_F(RetrievalFixture, IdenticalGroundedPredictionsScoreTwo) {
  const auto p = record("a", {0, 1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(grsitsim(p, p, o), 2.0);
}

TEST_F(RetrievalFixture, DisjointVerbsScoreZero) {
  EXPECT_EQ(grsitsim(record("a", {0, 1, 2, 3, 4}), record("b", {5, 6, 7, 8, 9}), o), 0.0);
}

TEST_F(RetrievalFixture, LastRankMatchScoresTwoOverTwentyFive) {
  const auto a = record("a", {0, 1, 2, 3, 11});
  const auto b = record("b", {5, 6, 7, 8, 11});
  EXPECT_DOUBLE_EQ(grsitsim(a, b, o), 2.0 / 25.0);
}

TEST_F(RetrievalFixture, BoxTermRules) {
  auto a = record("a", {0});
  auto b = record("b", {0});
  const std::size_t n = a.frames[0].roles.size();
  // Both ungrounded: full box credit.
  for (auto* p : {&a, &b})
    for (auto& r : p->frames[0].roles) r.exist = 0.2;
  EXPECT_DOUBLE_EQ(grsitsim(a, b, o), 2.0);
  // Exactly one grounded: noun credit only.
  for (auto& r : a.frames[0].roles) r.exist = 0.9;
  EXPECT_DOUBLE_EQ(grsitsim(a, b, o), 1.0);
  // Both grounded with IoU 1/7.
  for (auto& r : a.frames[0].roles) r.box = Corners{0, 0, 0.2, 0.2};
  for (auto& r : b.frames[0].roles) {
    r.box = Corners{0.1, 0.1, 0.3, 0.3};
    r.exist = 0.9;
  }
  EXPECT_NEAR(grsitsim(a, b, o), 1.0 + 1.0 / 7.0, 1e-12);
  // Half the nouns differ.
  b.frames[0].roles[0].noun = 7;
  EXPECT_NEAR(grsitsim(a, b, o), (n - 1) * (1.0 + 1.0 / 7.0) / n, 1e-12);
}

TEST_F(RetrievalFixture, SymmetricAndBoundedOnRandomPairs) {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const auto aa = testing::random_annotation(o, rng, "a");
    const auto ab = testing::random_annotation(o, rng, "b");
    const auto a = testing::noisy_prediction(aa, o, rng);
    const auto b = testing::noisy_prediction(ab, o, rng);
    const double s = grsitsim(a, b, o);
    EXPECT_DOUBLE_EQ(s, grsitsim(b, a, o));
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 2.0);
  }
}

TEST_F(RetrievalFixture, SelfRanksFirst) {
  Rng rng(6);
  std::vector<PredictionRecord> corpus;
  for (int i = 0; i < 15; ++i) {
    auto a = testing::random_annotation(o, rng, "img" + std::to_string(i));
    corpus.push_back(oracle_prediction(a, o));
    for (auto& f : corpus.back().frames)
      for (auto& r : f.roles) {
        r.box = Corners{0.2, 0.2, 0.4, 0.4};
        r.exist = 1.0;
      }
  }
  const auto hits = retrieve(corpus[7], corpus, 5, o);
  ASSERT_EQ(hits.size(), 5u);
  EXPECT_EQ(hits[0].image_id, "img7");
  EXPECT_DOUBLE_EQ(hits[0].score, 2.0);
  for (std::size_t i = 1; i < hits.size(); ++i) EXPECT_LE(hits[i].score, hits[i - 1].score);
  EXPECT_EQ(retrieve(corpus[7], corpus, 1, o).size(), 1u);
  EXPECT_EQ(retrieve(corpus[7], corpus, 100, o).size(), corpus.size());
}

TEST_F(RetrievalFixture, DisjointCorpusOrdersById) {
  const std::vector<PredictionRecord> corpus = {record("c", {5}), record("a", {6}), record("b", {7})};
  const auto hits = retrieve(record("q", {0, 1}), corpus, 3, o);
  ASSERT_EQ(hits.size(), 3u);
  EXPECT_EQ(hits[0].image_id, "a");
  EXPECT_EQ(hits[1].image_id, "b");
  EXPECT_EQ(hits[2].image_id, "c");
  for (const auto& h : hits) EXPECT_EQ(h.score, 0.0);
  EXPECT_THROW(retrieve(record("q", {0}), {}, 3, o), ValidationError);
}

}  // namespace
}  // namespace coformer
