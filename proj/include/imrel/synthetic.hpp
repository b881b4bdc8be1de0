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

// Seeded generator for a small distant-supervision world with latent entity
// clusters:
//  - the relation of (h, t) is a function of (cluster(h), cluster(t)):
//    NA inside a cluster, otherwise "/synthetic/to_c<cluster(t)>";
//  - the unlabeled corpus mostly mentions entities of one cluster together;
//  - labeled sentences carry a relation trigger word only some of the time
//    and misleading triggers at other times;
//  - a fraction of pairs is capped at very few training sentences;
//  - entity types reveal only cluster / 2.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <map>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "imrel/corpus.hpp"

namespace imrel {

struct SyntheticConfig {
  std::size_t entities = 200;
  std::size_t clusters = 4;
  std::size_t unlabeled_sentences = 20000;
  double intra_cluster_rate = 0.9;
  std::size_t pairs = 800;
  double capped_fraction = 0.3;
  std::size_t frequent_min = 4;
  std::size_t frequent_max = 8;
  std::size_t capped_max = 2;
  std::size_t test_frequent_min = 2;
  std::size_t test_frequent_max = 4;
  double signal_rate = 0.4;
  double misleading_rate = 0.3;
  std::size_t filler_words = 200;
  std::size_t triggers_per_relation = 3;
  std::size_t num_types = 38;
  std::uint64_t seed = 7;
};

struct SyntheticCorpus {
  std::vector<std::string> unlabeled_lines;
  std::vector<SentenceInstance> train;
  std::vector<SentenceInstance> test;
  std::vector<std::string> type_inventory;
  std::map<std::string, std::vector<std::string>> entity_types;
  std::set<std::pair<std::string, std::string>> capped_pairs;
  std::map<std::string, std::size_t> cluster_of;
  std::vector<std::string> relations;  // non-NA labels
};

inline std::string synthetic_entity_id(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "E%04zu", i);
  return buf;
}

inline std::string synthetic_relation(std::size_t head_cluster, std::size_t tail_cluster) {
  if (head_cluster == tail_cluster) return kNoRelation;
  return "/synthetic/to_c" + std::to_string(tail_cluster);
}

inline SyntheticCorpus generate_synthetic(const SyntheticConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  auto uniform = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  auto chance = [&](double p) { return std::bernoulli_distribution(p)(rng); };

  SyntheticCorpus out;
  std::vector<std::vector<std::size_t>> members(cfg.clusters);
  for (std::size_t i = 0; i < cfg.entities; ++i) {
    const std::size_t c = i * cfg.clusters / cfg.entities;
    members[c].push_back(i);
    out.cluster_of[synthetic_entity_id(i)] = c;
  }
  for (std::size_t c = 0; c < cfg.clusters; ++c) {
    out.relations.push_back("/synthetic/to_c" + std::to_string(c));
  }

  for (std::size_t t = 0; t < cfg.num_types; ++t) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "type%02zu", t);
    out.type_inventory.emplace_back(buf);
  }
  for (std::size_t i = 0; i < cfg.entities; ++i) {
    const std::string id = synthetic_entity_id(i);
    std::vector<std::string> types{out.type_inventory[out.cluster_of[id] / 2]};
    if (chance(0.2)) types.push_back(out.type_inventory[uniform(2, cfg.num_types - 1)]);
    out.entity_types[id] = types;
  }

  auto filler = [&] { return "w" + std::to_string(uniform(0, cfg.filler_words - 1)); };
  auto trigger = [&](std::size_t rel_index) {
    return "trig" + std::to_string(rel_index) + "_" +
           std::to_string(uniform(0, cfg.triggers_per_relation - 1));
  };

  // Unlabeled corpus: 2-3 mentions per sentence, mostly from one cluster.
  for (std::size_t s = 0; s < cfg.unlabeled_sentences; ++s) {
    const std::size_t len = uniform(8, 14);
    std::vector<std::string> tokens(len);
    for (auto& tok : tokens) tok = filler();
    const std::size_t mentions = uniform(2, 3);
    const std::size_t c = uniform(0, cfg.clusters - 1);
    nlohmann::json ents = nlohmann::json::array();
    std::set<std::size_t> used_pos;
    for (std::size_t m = 0; m < mentions; ++m) {
      const std::size_t e = chance(cfg.intra_cluster_rate)
                                ? members[c][uniform(0, members[c].size() - 1)]
                                : uniform(0, cfg.entities - 1);
      std::size_t pos = uniform(0, len - 1);
      while (used_pos.count(pos)) pos = uniform(0, len - 1);
      used_pos.insert(pos);
      tokens[pos] = "ENT";
      ents.push_back({{"id", synthetic_entity_id(e)}, {"pos", pos}});
    }
    out.unlabeled_lines.push_back(nlohmann::json{{"tokens", tokens}, {"entities", ents}}.dump());
  }

  // Labeled pairs.
  std::set<std::pair<std::size_t, std::size_t>> chosen;
  while (chosen.size() < cfg.pairs) {
    const std::size_t h = uniform(0, cfg.entities - 1);
    const std::size_t t = uniform(0, cfg.entities - 1);
    if (h != t) chosen.emplace(h, t);
  }
  std::vector<std::pair<std::size_t, std::size_t>> pairs(chosen.begin(), chosen.end());
  std::shuffle(pairs.begin(), pairs.end(), rng);
  const auto capped_count =
      static_cast<std::size_t>(cfg.capped_fraction * static_cast<double>(pairs.size()));

  auto relation_index = [&](const std::string& rel) {
    return static_cast<std::size_t>(
        std::find(out.relations.begin(), out.relations.end(), rel) - out.relations.begin());
  };

  auto make_sentence = [&](const std::string& head, const std::string& tail,
                           const std::string& rel) {
    SentenceInstance inst;
    const std::size_t len = uniform(8, 16);
    inst.tokens.resize(len);
    for (auto& tok : inst.tokens) tok = filler();
    inst.head_pos = uniform(0, len - 1);
    do {
      inst.tail_pos = uniform(0, len - 1);
    } while (inst.tail_pos == inst.head_pos);
    inst.tokens[inst.head_pos] = "ENT";
    inst.tokens[inst.tail_pos] = "ENT";
    inst.head_entity = head;
    inst.tail_entity = tail;
    inst.relation = rel;
    std::size_t trig_pos = uniform(0, len - 1);
    while (trig_pos == inst.head_pos || trig_pos == inst.tail_pos) trig_pos = uniform(0, len - 1);
    if (rel != kNoRelation && chance(cfg.signal_rate)) {
      inst.tokens[trig_pos] = trigger(relation_index(rel));
    } else if (chance(cfg.misleading_rate)) {
      inst.tokens[trig_pos] = trigger(uniform(0, out.relations.size() - 1));
    }
    return inst;
  };

  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [h, t] = pairs[p];
    const std::string head = synthetic_entity_id(h);
    const std::string tail = synthetic_entity_id(t);
    const std::string rel = synthetic_relation(out.cluster_of[head], out.cluster_of[tail]);
    const bool capped = p < capped_count;
    if (capped) out.capped_pairs.emplace(head, tail);
    const std::size_t n_train =
        capped ? uniform(1, cfg.capped_max) : uniform(cfg.frequent_min, cfg.frequent_max);
    const std::size_t n_test = capped ? uniform(1, cfg.capped_max)
                                      : uniform(cfg.test_frequent_min, cfg.test_frequent_max);
    for (std::size_t s = 0; s < n_train; ++s) out.train.push_back(make_sentence(head, tail, rel));
    for (std::size_t s = 0; s < n_test; ++s) out.test.push_back(make_sentence(head, tail, rel));
  }
  return out;
}

}  // namespace imrel
