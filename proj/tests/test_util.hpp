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

// Shared fixtures for the unit tests and the acceptance runner.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "imrel/corpus.hpp"
#include "imrel/embedding.hpp"
#include "imrel/model.hpp"

namespace imrel::testing {

inline std::string community_vertex(std::size_t community, std::size_t i) {
  return "c" + std::to_string(community) + "_" + std::to_string(100 + i);
}

// Two communities of `size` vertices: every intra pair co-occurs 5..20 times,
// and `inter_edges` random cross pairs co-occur 3 times.
inline CooccurrenceTable planted_partition(std::size_t size, std::size_t inter_edges,
                                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> count(5, 20);
  std::uniform_int_distribution<std::size_t> member(0, size - 1);
  CooccurrenceTable t;
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < size; ++i) {
      for (std::size_t j = i + 1; j < size; ++j) {
        t.add(community_vertex(c, i), community_vertex(c, j), count(rng));
      }
    }
  }
  for (std::size_t e = 0; e < inter_edges; ++e) {
    const auto a = community_vertex(0, member(rng));
    const auto b = community_vertex(1, member(rng));
    if (t.count(a, b) == 0) t.add(a, b, 3);
  }
  return t;
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

// Mean intra-community cosine minus mean inter-community cosine; community
// membership is read from the "c<k>_" id prefix.
inline double community_separation(const EntityVectors& ev) {
  double intra = 0.0, inter = 0.0;
  std::size_t n_intra = 0, n_inter = 0;
  for (std::size_t i = 0; i < ev.count(); ++i) {
    for (std::size_t j = i + 1; j < ev.count(); ++j) {
      const double c = cosine(ev.vectors.row(i), ev.vectors.row(j));
      if (ev.ids[i].substr(0, 3) == ev.ids[j].substr(0, 3)) {
        intra += c;
        ++n_intra;
      } else {
        inter += c;
        ++n_inter;
      }
    }
  }
  return intra / static_cast<double>(n_intra) - inter / static_cast<double>(n_inter);
}

// Small dimensions for gradient and property checks.
inline ModelConfig reduced_config() {
  ModelConfig c;
  c.vocab_size = 12;
  c.word_dim = 4;
  c.pos_dim = 2;
  c.max_length = 10;
  c.filters = 3;
  c.type_dim = 2;
  c.num_types = 5;
  c.entity_dim = 4;
  c.num_relations = 3;
  return c;
}

// Initialized parameters with every tensor perturbed, so no gradient is
// structurally zero.
inline ModelParams random_params(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p(config, seed);
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& [name, e] : p.store().entries()) {
    if (!e.trainable) continue;
    for (double& v : e.value.storage()) v += u(rng);
  }
  return p;
}

inline BagInput random_bag(const ModelConfig& config, std::size_t sentences, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> len(2, config.max_length);
  std::uniform_int_distribution<std::size_t> word(0, config.vocab_size - 1);
  std::uniform_int_distribution<std::size_t> type(0, config.num_types - 1);
  std::uniform_int_distribution<std::size_t> label(0, config.num_relations - 1);
  std::normal_distribution<double> g(0.0, 0.5);
  BagInput bag;
  for (std::size_t j = 0; j < sentences; ++j) {
    EncodedSentence s;
    s.ids.resize(len(rng));
    for (auto& id : s.ids) id = word(rng);
    std::uniform_int_distribution<std::size_t> pos(0, s.ids.size() - 1);
    s.head_pos = pos(rng);
    do {
      s.tail_pos = pos(rng);
    } while (s.tail_pos == s.head_pos);
    bag.sentences.push_back(std::move(s));
  }
  bag.mutual_relation.resize(config.entity_dim);
  for (double& v : bag.mutual_relation) v = g(rng);
  bag.head_types = {type(rng)};
  if (rng() % 2) bag.head_types.push_back((bag.head_types[0] + 1) % config.num_types);
  if (rng() % 4) bag.tail_types = {type(rng)};
  bag.label = label(rng);
  return bag;
}

// Max relative error of the full bag-loss gradient against central
// differences. Dropout is active; the mask is replayed from a fixed seed.
inline double model_gradient_error(const ModelConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelParams params = random_params(config, seed);
  const BagInput bag = random_bag(config, 3, rng);
  const std::uint64_t mask_seed = seed * 31 + 7;
  params.store().zero_grad();
  {
    std::mt19937_64 mask(mask_seed);
    const auto trace = forward_bag_train(bag, params, &mask);
    backward(trace, bag, params);
  }
  return finite_diff_check(
      [&](const ParamStore& store) {
        const ModelParams probe = ModelParams::from_store(config, store);
        std::mt19937_64 mask(mask_seed);
        return bag_loss(forward_bag_train(bag, probe, &mask), bag.label);
      },
      params.store(), 1e-4);
}

}  // namespace imrel::testing
