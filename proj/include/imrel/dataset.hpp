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

#include <span>
#include <vector>

#include "imrel/corpus.hpp"
#include "imrel/embedding.hpp"
#include "imrel/model.hpp"
#include "imrel/traineval.hpp"

namespace imrel {

// Labeled data grouped into bags, with the label and word inventories taken
// from the training split.
struct PreparedCorpus {
  Vocabulary vocab;
  RelationSet relations;
  std::vector<Bag> train_bags;
  std::vector<Bag> test_bags;
};

inline PreparedCorpus prepare_corpus(std::span<const SentenceInstance> train,
                                     std::span<const SentenceInstance> test,
                                     std::size_t min_count) {
  return {build_vocab(train, min_count), RelationSet::from_instances(train),
          assemble_training_bags(train), assemble_test_bags(test)};
}

// Sets the data-dependent dimensions of `config`.
inline void fit_config(ModelConfig& config, const PreparedCorpus& corpus) {
  config.vocab_size = corpus.vocab.size();
  config.num_relations = corpus.relations.size();
}

inline std::vector<BagInput> encode_training_bags(const PreparedCorpus& corpus,
                                                  const ModelConfig& config,
                                                  const EntityVectors* vectors,
                                                  const TypeCatalog* types,
                                                  FeatureCoverage* coverage = nullptr) {
  std::vector<BagInput> out;
  out.reserve(corpus.train_bags.size());
  for (const auto& bag : corpus.train_bags) {
    out.push_back(make_bag_input(bag, corpus.vocab, corpus.relations, config, vectors, types,
                                 coverage));
  }
  return out;
}

inline std::vector<PairBag> encode_pair_bags(std::span<const Bag> bags, const Vocabulary& vocab,
                                             const RelationSet& relations,
                                             const ModelConfig& config,
                                             const EntityVectors* vectors,
                                             const TypeCatalog* types,
                                             FeatureCoverage* coverage = nullptr) {
  std::vector<PairBag> out;
  out.reserve(bags.size());
  for (const auto& bag : bags) {
    out.push_back({bag.head_entity, bag.tail_entity,
                   make_bag_input(bag, vocab, relations, config, vectors, types, coverage)});
  }
  return out;
}

}  // namespace imrel
