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

// Pipeline configuration: "key = value" lines with dotted keys. A "[name]"
// line prefixes the following keys with "name.". '#' starts a comment.

#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "imrel/embedding.hpp"
#include "imrel/errors.hpp"
#include "imrel/model.hpp"
#include "imrel/proximity.hpp"
#include "imrel/traineval.hpp"

namespace imrel {

struct PipelineConfig {
  struct Paths {
    std::string unlabeled;
    std::string train;
    std::string test;
    std::string types;
    std::string type_inventory;
    std::string pretrained_words;
    std::string out = "out";
  } paths;
  std::int64_t graph_threshold = kDefaultGraphThreshold;
  EmbeddingConfig embedding;
  ModelConfig model;
  std::size_t vocab_min_count = 1;
  std::size_t epochs = 10;
  std::size_t batch_size = 160;
  double lr = 0.3;
  std::vector<std::uint64_t> seeds{1};
  std::vector<std::size_t> p_at{100, 200, 300};

  // Applies one setting; throws std::invalid_argument on an unknown key or
  // a malformed value.
  void set(const std::string& key, const std::string& value);

  // Canonical key=value echo of every setting, in key order.
  std::map<std::string, std::string> echo() const;

  void validate() const {
    if (graph_threshold < 2) throw std::invalid_argument("graph.threshold must be >= 2");
    embedding.validate();
    if (embedding.entity_dim() != model.entity_dim) {
      throw std::invalid_argument("embedding.d1 + embedding.d2 must equal model.entity_dim");
    }
    if (batch_size < 1) throw std::invalid_argument("train.batch_size must be >= 1");
    if (!(lr > 0.0)) throw std::invalid_argument("train.lr must be positive");
    if (seeds.empty()) throw std::invalid_argument("train.seeds must not be empty");
    if (vocab_min_count < 1) throw std::invalid_argument("model.vocab_min_count must be >= 1");
    for (std::size_t n : p_at) {
      if (n < 1) throw std::invalid_argument("eval.p_at entries must be >= 1");
    }
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T v{};
  if (!(in >> v) || !(in >> std::ws).eof()) {
    throw std::invalid_argument("bad value for " + key + ": '" + value + "'");
  }
  if constexpr (std::is_unsigned_v<T>) {
    if (value.find('-') != std::string::npos) {
      throw std::invalid_argument("bad value for " + key + ": '" + value + "'");
    }
  }
  return v;
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& value) {
  std::vector<T> out;
  std::istringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_number<T>(key, trim(item)));
  if (out.empty()) throw std::invalid_argument("empty list for " + key);
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw std::invalid_argument("bad value for " + key + ": '" + value + "'");
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

}  // namespace detail

inline void PipelineConfig::set(const std::string& key, const std::string& value) {
  using detail::parse_number;
  auto size = [&] { return parse_number<std::size_t>(key, value); };
  auto real = [&] { return parse_number<double>(key, value); };
  if (key == "paths.unlabeled") paths.unlabeled = value;
  else if (key == "paths.train") paths.train = value;
  else if (key == "paths.test") paths.test = value;
  else if (key == "paths.types") paths.types = value;
  else if (key == "paths.type_inventory") paths.type_inventory = value;
  else if (key == "paths.pretrained_words") paths.pretrained_words = value;
  else if (key == "paths.out") paths.out = value;
  else if (key == "graph.threshold") graph_threshold = parse_number<std::int64_t>(key, value);
  else if (key == "embedding.d1") embedding.first_dim = size();
  else if (key == "embedding.d2") embedding.second_dim = size();
  else if (key == "embedding.negatives") embedding.negatives = size();
  else if (key == "embedding.samples") embedding.total_samples = parse_number<std::uint64_t>(key, value);
  else if (key == "embedding.lr") embedding.initial_lr = real();
  else if (key == "embedding.noise_power") embedding.noise_power = real();
  else if (key == "embedding.seed") embedding.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "embedding.workers") embedding.workers = size();
  else if (key == "model.word_dim") model.word_dim = size();
  else if (key == "model.pos_dim") model.pos_dim = size();
  else if (key == "model.max_length") model.max_length = size();
  else if (key == "model.filters") model.filters = size();
  else if (key == "model.window") model.window = size();
  else if (key == "model.type_dim") model.type_dim = size();
  else if (key == "model.num_types") model.num_types = size();
  else if (key == "model.entity_dim") model.entity_dim = size();
  else if (key == "model.vocab_min_count") vocab_min_count = size();
  else if (key == "model.use_mutual_relation") model.use_mutual_relation = detail::parse_bool(key, value);
  else if (key == "model.inference_attention") {
    if (value == "per_relation") model.inference_attention = InferenceAttention::kPerRelation;
    else if (value == "uniform") model.inference_attention = InferenceAttention::kUniform;
    else throw std::invalid_argument("bad value for " + key + ": '" + value + "'");
  }
  else if (key == "train.epochs") epochs = size();
  else if (key == "train.batch_size") batch_size = size();
  else if (key == "train.lr") lr = real();
  else if (key == "train.dropout") model.dropout = real();
  else if (key == "train.seeds") seeds = detail::parse_list<std::uint64_t>(key, value);
  else if (key == "eval.p_at") p_at = detail::parse_list<std::size_t>(key, value);
  else throw std::invalid_argument("unknown configuration key: " + key);
}

inline std::map<std::string, std::string> PipelineConfig::echo() const {
  auto real = [](double v) { return detail::format_double(v); };
  return {
      {"paths.unlabeled", paths.unlabeled},
      {"paths.train", paths.train},
      {"paths.test", paths.test},
      {"paths.types", paths.types},
      {"paths.type_inventory", paths.type_inventory},
      {"paths.pretrained_words", paths.pretrained_words},
      {"paths.out", paths.out},
      {"graph.threshold", std::to_string(graph_threshold)},
      {"embedding.d1", std::to_string(embedding.first_dim)},
      {"embedding.d2", std::to_string(embedding.second_dim)},
      {"embedding.negatives", std::to_string(embedding.negatives)},
      {"embedding.samples", std::to_string(embedding.total_samples)},
      {"embedding.lr", real(embedding.initial_lr)},
      {"embedding.noise_power", real(embedding.noise_power)},
      {"embedding.seed", std::to_string(embedding.seed)},
      {"embedding.workers", std::to_string(embedding.workers)},
      {"model.word_dim", std::to_string(model.word_dim)},
      {"model.pos_dim", std::to_string(model.pos_dim)},
      {"model.max_length", std::to_string(model.max_length)},
      {"model.filters", std::to_string(model.filters)},
      {"model.window", std::to_string(model.window)},
      {"model.type_dim", std::to_string(model.type_dim)},
      {"model.num_types", std::to_string(model.num_types)},
      {"model.entity_dim", std::to_string(model.entity_dim)},
      {"model.vocab_min_count", std::to_string(vocab_min_count)},
      {"model.use_mutual_relation", model.use_mutual_relation ? "1" : "0"},
      {"model.inference_attention", detail::attention_name(model.inference_attention)},
      {"train.epochs", std::to_string(epochs)},
      {"train.batch_size", std::to_string(batch_size)},
      {"train.lr", real(lr)},
      {"train.dropout", real(model.dropout)},
      {"train.seeds", detail::join(seeds)},
      {"eval.p_at", detail::join(p_at)},
  };
}

// Reads settings from `in` into `config`. Errors carry the line number.
inline void load_config(std::istream& in, PipelineConfig& config) {
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(line_no, "unterminated section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(line_no, "expected key = value");
    std::string key = detail::trim(line.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    try {
      config.set(key, detail::trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw ParseError(line_no, e.what());
    }
  }
}

// "key=value" override from the command line.
inline void apply_override(PipelineConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw std::invalid_argument("override must be key=value: " + assignment);
  }
  config.set(detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
}

}  // namespace imrel
