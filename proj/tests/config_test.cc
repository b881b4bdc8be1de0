/*
 * Copyright 2026 The imrel Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "imrel/config.hpp"

#include <sstream>

#include <gtest/gtest.h>

namespace imrel {
namespace {

PipelineConfig load(const std::string& text) {
  PipelineConfig c;
  std::istringstream in(text);
  load_config(in, c);
  return c;
}

TEST(Config, DefaultsValidate) {
  PipelineConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.model.filters, 230u);
  EXPECT_EQ(c.model.entity_dim, 128u);
  EXPECT_EQ(c.graph_threshold, 3);
  EXPECT_EQ(c.batch_size, 160u);
  EXPECT_DOUBLE_EQ(c.model.dropout, 0.5);
}

TEST(Config, SectionsCommentsAndDottedKeys) {
  const auto c = load(
      "# pipeline\n"
      "paths.out = /tmp/run  # trailing comment\n"
      "\n"
      "[embedding]\n"
      "d1 = 32\n"
      "d2=32\n"
      "workers = 4\n"
      "[model]\n"
      "entity_dim = 64\n"
      "inference_attention = uniform\n"
      "use_mutual_relation = false\n"
      "[train]\n"
      "seeds = 1, 2,3\n"
      "dropout = 0.25\n"
      "[eval]\n"
      "p_at = 10,20\n");
  EXPECT_EQ(c.paths.out, "/tmp/run");
  EXPECT_EQ(c.embedding.first_dim, 32u);
  EXPECT_EQ(c.embedding.second_dim, 32u);
  EXPECT_EQ(c.embedding.workers, 4u);
  EXPECT_EQ(c.model.entity_dim, 64u);
  EXPECT_EQ(c.model.inference_attention, InferenceAttention::kUniform);
  EXPECT_FALSE(c.model.use_mutual_relation);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_DOUBLE_EQ(c.model.dropout, 0.25);
  EXPECT_EQ(c.p_at, (std::vector<std::size_t>{10, 20}));
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, OverrideWinsOverFile) {
  auto c = load("[model]\nfilters = 100\n");
  apply_override(c, "model.filters=50");
  EXPECT_EQ(c.model.filters, 50u);
  EXPECT_THROW(apply_override(c, "model.filters"), std::invalid_argument);
  EXPECT_THROW(apply_override(c, "model.nope=1"), std::invalid_argument);
}

TEST(Config, ErrorsCarryLineNumber) {
  try {
    load("[model]\nfilters = 10\nfilters = ten\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  try {
    load("\n\nnot a setting\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_THROW(load("[model\n"), ParseError);
  EXPECT_THROW(load("model.filters = -3\n"), ParseError);
  EXPECT_THROW(load("train.lr = 0.1x\n"), ParseError);
  EXPECT_THROW(load("model.use_mutual_relation = maybe\n"), ParseError);
}

TEST(Config, ValidateRejectsInconsistentDims) {
  auto c = load("embedding.d1 = 10\n");
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = load("graph.threshold = 1\n");
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = load("train.batch_size = 0\n");
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Config, EchoRoundTrips) {
  auto c = load("[train]\nlr = 0.1\nseeds = 4,5\n[embedding]\nlr = 0.0125\n");
  const auto echo = c.echo();
  EXPECT_EQ(echo.at("train.lr"), "0.1");
  EXPECT_EQ(echo.at("train.seeds"), "4,5");
  PipelineConfig d;
  for (const auto& [k, v] : echo) d.set(k, v);
  EXPECT_EQ(d.echo(), echo);
}

}  // namespace
}  // namespace imrel
