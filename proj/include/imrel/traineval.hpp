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

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "imrel/corpus.hpp"
#include "imrel/model.hpp"
#include "imrel/numerics.hpp"

namespace imrel {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 160;
  double lr = 0.3;
  std::uint64_t seed = 1;
  std::size_t eval_every = 0;  // 0 disables the epoch callback
  std::function<void(std::size_t epoch, const ModelParams&)> on_eval;

  void validate() const {
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch size must be >= 1");
    if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be positive");
  }
};

struct TrainResult {
  std::vector<double> epoch_loss;  // mean bag loss per epoch
};

// Mini-batch SGD over bags. Each epoch shuffles with a seeded generator;
// each batch applies the mean bag-loss gradient. Dropout uses the model's
// configured rate.
inline TrainResult train(std::span<const BagInput> bags, ModelParams& params,
                         const TrainConfig& config) {
  config.validate();
  if (bags.empty()) throw std::invalid_argument("train: empty training set");
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(bags.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  TrainResult result;
  params.store().zero_grad();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const BagInput& bag = bags[order[i]];
        const auto trace = forward_bag_train(bag, params, &rng);
        total += bag_loss(trace, bag.label);
        backward(trace, bag, params, scale);
      }
      sgd_step(params.store(), config.lr);
    }
    result.epoch_loss.push_back(total / static_cast<double>(bags.size()));
    if (config.on_eval && config.eval_every && (epoch + 1) % config.eval_every == 0) {
      config.on_eval(epoch + 1, params);
    }
  }
  return result;
}

// A bag to score, with its entity pair.
struct PairBag {
  std::string head_entity;
  std::string tail_entity;
  BagInput input;
};

struct Prediction {
  std::string head_entity;
  std::string tail_entity;
  std::string relation;
  double confidence = 0.0;
};

using Fact = std::tuple<std::string, std::string, std::string>;

inline Fact fact_of(const Prediction& p) {
  return {p.head_entity, p.tail_entity, p.relation};
}

// Descending confidence; ties by (head, tail, relation).
inline void sort_predictions(std::vector<Prediction>& preds) {
  std::sort(preds.begin(), preds.end(), [](const Prediction& a, const Prediction& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return fact_of(a) < fact_of(b);
  });
}

// One prediction per (bag, non-NA relation).
inline std::vector<Prediction> predict(std::span<const PairBag> bags, const ModelParams& params,
                                       const RelationSet& relations) {
  if (relations.size() != params.config().num_relations) {
    throw std::invalid_argument("predict: relation set does not match model");
  }
  std::vector<Prediction> out;
  out.reserve(bags.size() * (relations.size() - 1));
  for (const auto& bag : bags) {
    const auto trace = forward_bag_inference(bag.input, params);
    for (std::size_t r = 1; r < relations.size(); ++r) {
      out.push_back({bag.head_entity, bag.tail_entity, relations.name(r), trace.confidence[r]});
    }
  }
  sort_predictions(out);
  return out;
}

// Non-NA (head, tail, relation) facts of the test bags.
inline std::set<Fact> gold_facts(std::span<const Bag> bags) {
  std::set<Fact> gold;
  for (const auto& bag : bags) {
    for (const auto& l : bag.labels) {
      if (l != kNoRelation) gold.emplace(bag.head_entity, bag.tail_entity, l);
    }
  }
  return gold;
}

struct PRPoint {
  double precision = 0.0;
  double recall = 0.0;
};

// One point per ranked prefix k = 1..N.
inline std::vector<PRPoint> pr_curve(std::span<const Prediction> ranked,
                                     const std::set<Fact>& gold) {
  if (gold.empty()) throw std::invalid_argument("pr_curve: empty gold set");
  std::vector<PRPoint> points;
  points.reserve(ranked.size());
  std::size_t correct = 0;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    if (gold.count(fact_of(ranked[k]))) ++correct;
    points.push_back({static_cast<double>(correct) / static_cast<double>(k + 1),
                      static_cast<double>(correct) / static_cast<double>(gold.size())});
  }
  return points;
}

// Trapezoidal area under precision over recall, starting at recall 0 with
// the first point's precision.
inline double auc(std::span<const PRPoint> points) {
  if (points.empty()) return 0.0;
  double area = 0.0;
  double prev_r = 0.0;
  double prev_p = points.front().precision;
  for (const auto& pt : points) {
    area += (pt.recall - prev_r) * (pt.precision + prev_p) / 2.0;
    prev_r = pt.recall;
    prev_p = pt.precision;
  }
  return area;
}

inline double p_at_n(std::span<const Prediction> ranked, const std::set<Fact>& gold,
                     std::size_t n) {
  if (n < 1) throw std::invalid_argument("p_at_n: N must be >= 1");
  const std::size_t top = std::min(n, ranked.size());
  if (top == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t k = 0; k < top; ++k) correct += gold.count(fact_of(ranked[k]));
  return static_cast<double>(correct) / static_cast<double>(top);
}

struct F1Point {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t index = 0;
};

inline double f1_score(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

// First point attaining the maximum F1.
inline F1Point max_f1(std::span<const PRPoint> points) {
  F1Point best;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double f = f1_score(points[i].precision, points[i].recall);
    if (i == 0 || f > best.f1) best = {points[i].precision, points[i].recall, f, i};
  }
  return best;
}

inline const std::vector<std::size_t>& default_p_at_cutoffs() {
  static const std::vector<std::size_t> cutoffs{100, 200, 300};
  return cutoffs;
}

struct Metrics {
  double auc = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::map<std::size_t, double> p_at;
};

inline Metrics evaluate(std::span<const Prediction> ranked, const std::set<Fact>& gold,
                        std::span<const std::size_t> cutoffs = default_p_at_cutoffs()) {
  const auto points = pr_curve(ranked, gold);
  Metrics m;
  m.auc = auc(points);
  const auto best = max_f1(points);
  m.precision = best.precision;
  m.recall = best.recall;
  m.f1 = best.f1;
  for (std::size_t n : cutoffs) m.p_at[n] = p_at_n(ranked, gold, n);
  return m;
}

inline nlohmann::json metrics_to_json(const Metrics& m) {
  nlohmann::json j;
  j["auc"] = m.auc;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  nlohmann::json p = nlohmann::json::object();
  for (const auto& [n, v] : m.p_at) p[std::to_string(n)] = v;
  j["p_at"] = p;
  return j;
}

inline Metrics mean_metrics(std::span<const Metrics> runs) {
  Metrics mean;
  if (runs.empty()) return mean;
  const double inv = 1.0 / static_cast<double>(runs.size());
  for (const auto& r : runs) {
    mean.auc += inv * r.auc;
    mean.precision += inv * r.precision;
    mean.recall += inv * r.recall;
    mean.f1 += inv * r.f1;
    for (const auto& [n, v] : r.p_at) mean.p_at[n] += inv * v;
  }
  return mean;
}

inline void write_pr_csv(std::span<const PRPoint> points, std::ostream& out) {
  out << "rank,precision,recall\n";
  char buf[64];
  for (std::size_t k = 0; k < points.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f\n", k + 1, points[k].precision,
                  points[k].recall);
    out << buf;
  }
}

}  // namespace imrel
