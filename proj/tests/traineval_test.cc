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

#include "imrel/traineval.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "imrel/dataset.hpp"
#include "imrel/synthetic.hpp"
#include "metrics_oracle.hpp"
#include "test_util.hpp"

namespace imrel {
namespace {

Prediction pred(const std::string& h, const std::string& t, const std::string& r, double c) {
  return {h, t, r, c};
}

// Ranked pattern [1, 0, 1, 0] against two gold facts.
std::vector<Prediction> hand_ranked() {
  return {pred("a", "b", "r", 0.9), pred("a", "c", "r", 0.8), pred("b", "c", "r", 0.7),
          pred("c", "d", "r", 0.6)};
}

std::set<Fact> hand_gold() { return {{"a", "b", "r"}, {"b", "c", "r"}}; }

TEST(PrCurve, HandPattern) {
  const auto pts = pr_curve(hand_ranked(), hand_gold());
  ASSERT_EQ(pts.size(), 4u);
  const double expected[4][2] = {{1.0, 0.5}, {0.5, 0.5}, {2.0 / 3.0, 1.0}, {0.5, 1.0}};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(pts[i].precision, expected[i][0], 1e-12);
    EXPECT_NEAR(pts[i].recall, expected[i][1], 1e-12);
  }
  EXPECT_NEAR(auc(pts), oracle::polyline_area(pts), 1e-6);
  EXPECT_NEAR(auc(pts), 0.5 + 0.5 * (0.5 + 2.0 / 3.0) / 2.0, 1e-12);
  const auto best = max_f1(pts);
  EXPECT_NEAR(best.f1, 0.8, 1e-12);
  EXPECT_EQ(best.index, 2u);
  EXPECT_NEAR(p_at_n(hand_ranked(), hand_gold(), 3), 2.0 / 3.0, 1e-12);
}

TEST(PrCurve, PerfectAndSingle) {
  const std::vector<Prediction> ranked{pred("a", "b", "r", 0.9), pred("b", "c", "r", 0.5)};
  const std::set<Fact> gold{{"a", "b", "r"}, {"b", "c", "r"}, {"x", "y", "r"}};
  const auto pts = pr_curve(ranked, gold);
  for (const auto& p : pts) EXPECT_EQ(p.precision, 1.0);
  EXPECT_NEAR(pts.back().recall, 2.0 / 3.0, 1e-12);
  EXPECT_EQ(p_at_n(ranked, gold, 2), 1.0);

  const std::vector<Prediction> one{pred("a", "b", "r", 0.4)};
  const auto single = pr_curve(one, {{"a", "b", "r"}});
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(single[0].precision, 1.0);
  EXPECT_EQ(single[0].recall, 1.0);
  EXPECT_EQ(auc(single), 1.0);
  const auto f = max_f1(single);
  EXPECT_EQ(f.f1, 1.0);
  const std::vector<PRPoint> half{{0.5, 0.5}};
  EXPECT_NEAR(auc(half), 0.25, 1e-15);
  EXPECT_NEAR(max_f1(half).f1, 0.5, 1e-15);
  EXPECT_THROW(pr_curve(one, {}), std::invalid_argument);
}

TEST(PAtN, ClampsToList) {
  EXPECT_NEAR(p_at_n(hand_ranked(), hand_gold(), 100), 0.5, 1e-15);
  EXPECT_THROW(p_at_n(hand_ranked(), hand_gold(), 0), std::invalid_argument);
  EXPECT_EQ(p_at_n({}, hand_gold(), 5), 0.0);
}

TEST(Metrics, MatchBruteForce) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const auto [ranked, gold] = oracle::random_case(rng);
    const auto pts = pr_curve(ranked, gold);
    const auto ref = oracle::brute_force(ranked, gold);
    ASSERT_EQ(pts.size(), ref.points.size());
    for (std::size_t k = 0; k < pts.size(); ++k) {
      EXPECT_NEAR(pts[k].precision, ref.points[k].precision, 1e-12);
      EXPECT_NEAR(pts[k].recall, ref.points[k].recall, 1e-12);
    }
    EXPECT_NEAR(auc(pts), ref.auc, 1e-12);
    EXPECT_NEAR(auc(pts), oracle::polyline_area(pts), 1e-5);
    const auto best = max_f1(pts);
    EXPECT_EQ(best.index, ref.best_index);
    EXPECT_NEAR(best.f1, ref.best_f1, 1e-12);
    for (std::size_t n : {1u, 7u, 50u}) {
      EXPECT_NEAR(p_at_n(ranked, gold, n), ref.p_at(n), 1e-12);
    }
    // invariants
    double a = auc(pts);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
    for (std::size_t k = 1; k < pts.size(); ++k) EXPECT_GE(pts[k].recall, pts[k - 1].recall);
    EXPECT_NEAR(p_at_n(ranked, gold, ranked.size()), pts.back().precision, 1e-15);
  }
}

TEST(SortPredictions, TieBreak) {
  std::vector<Prediction> v{pred("b", "a", "r", 0.5), pred("a", "z", "r2", 0.5),
                            pred("a", "z", "r1", 0.5), pred("c", "c", "r", 0.9)};
  sort_predictions(v);
  EXPECT_EQ(v[0].head_entity, "c");
  EXPECT_EQ(v[1].relation, "r1");
  EXPECT_EQ(v[2].relation, "r2");
  EXPECT_EQ(v[3].head_entity, "b");
}

TEST(Metrics, JsonAndCsv) {
  const auto m = evaluate(hand_ranked(), hand_gold());
  const auto j = metrics_to_json(m);
  EXPECT_NEAR(j["f1"].get<double>(), 0.8, 1e-12);
  EXPECT_TRUE(j["p_at"].contains("100"));
  const std::vector<Metrics> runs{m, m};
  EXPECT_NEAR(mean_metrics(runs).auc, m.auc, 1e-15);
  std::ostringstream csv;
  write_pr_csv(pr_curve(hand_ranked(), hand_gold()), csv);
  EXPECT_EQ(csv.str(),
            "rank,precision,recall\n1,1.000000,0.500000\n2,0.500000,0.500000\n"
            "3,0.666667,1.000000\n4,0.500000,1.000000\n");
}

struct SmallWorld {
  PreparedCorpus corpus;
  ModelConfig config;
  std::vector<BagInput> train;
  std::vector<PairBag> test;
};

SmallWorld small_world() {
  SyntheticConfig sc;
  sc.entities = 60;
  sc.pairs = 120;
  sc.unlabeled_sentences = 10;
  const auto syn = generate_synthetic(sc);
  SmallWorld w{prepare_corpus(syn.train, syn.test, 1), {}, {}, {}};
  w.config.filters = 20;
  w.config.word_dim = 10;
  fit_config(w.config, w.corpus);
  TypeCatalog types(syn.type_inventory);
  for (const auto& [e, t] : syn.entity_types) types.set_types(e, t);
  w.train = encode_training_bags(w.corpus, w.config, nullptr, &types);
  w.test = encode_pair_bags(w.corpus.test_bags, w.corpus.vocab, w.corpus.relations, w.config,
                            nullptr, &types);
  return w;
}

TEST(Train, ZeroEpochsKeepsInit) {
  const auto w = small_world();
  ModelParams p(w.config, 3);
  const ModelParams init = p;
  TrainConfig tc;
  tc.epochs = 0;
  train(w.train, p, tc);
  for (const auto& [name, e] : init.store().entries()) EXPECT_EQ(p.store().value(name), e.value);
  EXPECT_THROW(train({}, p, tc), std::invalid_argument);
}

TEST(Train, DeterministicAndDecreasing) {
  const auto w = small_world();
  TrainConfig tc;
  tc.epochs = 5;
  tc.batch_size = 16;
  ModelParams a(w.config, 4), b(w.config, 4);
  const auto ra = train(w.train, a, tc);
  const auto rb = train(w.train, b, tc);
  EXPECT_EQ(ra.epoch_loss, rb.epoch_loss);
  ASSERT_EQ(ra.epoch_loss.size(), 5u);
  EXPECT_LT(ra.epoch_loss[4], ra.epoch_loss[0]);
  for (const auto& [name, e] : a.store().entries()) EXPECT_EQ(b.store().value(name), e.value);
}

TEST(Train, EvalCallback) {
  const auto w = small_world();
  ModelParams p(w.config, 5);
  TrainConfig tc;
  tc.epochs = 4;
  tc.eval_every = 2;
  std::vector<std::size_t> seen;
  tc.on_eval = [&](std::size_t epoch, const ModelParams&) { seen.push_back(epoch); };
  train(w.train, p, tc);
  EXPECT_EQ(seen, (std::vector<std::size_t>{2, 4}));
}

TEST(Predict, CountsAndOrder) {
  const auto w = small_world();
  const ModelParams p(w.config, 6);
  const auto preds = predict(w.test, p, w.corpus.relations);
  EXPECT_EQ(preds.size(), w.test.size() * (w.corpus.relations.size() - 1));
  for (std::size_t i = 1; i < preds.size(); ++i) {
    EXPECT_GE(preds[i - 1].confidence, preds[i].confidence);
  }
  for (const auto& x : preds) {
    EXPECT_NE(x.relation, kNoRelation);
    EXPECT_GE(x.confidence, 0.0);
    EXPECT_LE(x.confidence, 1.0);
  }
  EXPECT_TRUE(predict({}, p, w.corpus.relations).empty());
}

TEST(GoldFacts, SkipsNa) {
  Bag b;
  b.head_entity = "h";
  b.tail_entity = "t";
  b.labels = {"NA", "r1", "r2"};
  const std::vector<Bag> bags{b};
  EXPECT_EQ(gold_facts(bags), (std::set<Fact>{{"h", "t", "r1"}, {"h", "t", "r2"}}));
}

}  // namespace
}  // namespace imrel
