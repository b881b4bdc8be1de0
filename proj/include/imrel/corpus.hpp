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

// Annotated corpus readers: labeled distant-supervision sentences, unlabeled
// entity-annotated sentences, sentence-level co-occurrence counting, bag
// assembly and vocabulary construction.

#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "imrel/errors.hpp"

namespace imrel {

inline constexpr std::size_t kMaxSentenceLength = 120;
inline constexpr const char* kNoRelation = "NA";

struct SentenceInstance {
  std::vector<std::string> tokens;
  std::string head_entity;
  std::string tail_entity;
  std::size_t head_pos = 0;
  std::size_t tail_pos = 0;
  std::optional<std::string> relation;
};

struct ParseStats {
  std::size_t lines = 0;
  std::size_t accepted = 0;
  std::size_t dropped_truncated = 0;  // entity beyond the truncation boundary
  std::size_t rejected = 0;           // position out of range or head == tail
};

namespace detail {

inline bool is_blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(),
                     [](unsigned char c) { return std::isspace(c); });
}

inline std::pair<std::string, std::int64_t> read_mention(const nlohmann::json& j,
                                                          const char* field) {
  const auto& m = j.at(field);
  return {m.at("id").get<std::string>(), m.at("pos").get<std::int64_t>()};
}

}  // namespace detail

// Parses one labeled-corpus JSON line. Returns nullopt when the record is
// well-formed but rejected; `stats` records why.
inline std::optional<SentenceInstance> parse_instance_line(
    const std::string& line, std::size_t line_no, ParseStats& stats,
    std::size_t max_length = kMaxSentenceLength) {
  SentenceInstance inst;
  std::int64_t head_pos = 0;
  std::int64_t tail_pos = 0;
  try {
    const auto j = nlohmann::json::parse(line);
    inst.tokens = j.at("tokens").get<std::vector<std::string>>();
    std::tie(inst.head_entity, head_pos) = detail::read_mention(j, "head");
    std::tie(inst.tail_entity, tail_pos) = detail::read_mention(j, "tail");
    if (j.contains("relation") && !j.at("relation").is_null()) {
      inst.relation = j.at("relation").get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(line_no, e.what());
  }
  const auto n = static_cast<std::int64_t>(inst.tokens.size());
  if (head_pos < 0 || tail_pos < 0 || head_pos >= n || tail_pos >= n ||
      inst.head_entity == inst.tail_entity) {
    ++stats.rejected;
    return std::nullopt;
  }
  if (inst.tokens.size() > max_length) {
    if (head_pos >= static_cast<std::int64_t>(max_length) ||
        tail_pos >= static_cast<std::int64_t>(max_length)) {
      ++stats.dropped_truncated;
      return std::nullopt;
    }
    inst.tokens.resize(max_length);
  }
  inst.head_pos = static_cast<std::size_t>(head_pos);
  inst.tail_pos = static_cast<std::size_t>(tail_pos);
  ++stats.accepted;
  return inst;
}

inline std::vector<SentenceInstance> parse_instances(
    std::istream& in, ParseStats* stats_out = nullptr,
    std::size_t max_length = kMaxSentenceLength) {
  ParseStats stats;
  std::vector<SentenceInstance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank(line)) continue;
    ++stats.lines;
    if (auto inst = parse_instance_line(line, line_no, stats, max_length)) {
      out.push_back(std::move(*inst));
    }
  }
  if (stats_out) *stats_out = stats;
  return out;
}

inline nlohmann::json instance_to_json(const SentenceInstance& inst) {
  nlohmann::json j;
  j["tokens"] = inst.tokens;
  j["head"] = {{"id", inst.head_entity}, {"pos", inst.head_pos}};
  j["tail"] = {{"id", inst.tail_entity}, {"pos", inst.tail_pos}};
  if (inst.relation) j["relation"] = *inst.relation;
  return j;
}

// Sentence-level entity pair counts keyed by the lexicographically ordered
// pair.
class CooccurrenceTable {
 public:
  using Key = std::pair<std::string, std::string>;

  static Key canonical(const std::string& a, const std::string& b) {
    return a < b ? Key{a, b} : Key{b, a};
  }

  void add(const std::string& a, const std::string& b, std::int64_t n = 1) {
    if (a == b) throw std::invalid_argument("CooccurrenceTable: self pair " + a);
    auto& c = counts_[canonical(a, b)];
    c += n;
    max_count_ = std::max(max_count_, c);
  }

  std::int64_t count(const std::string& a, const std::string& b) const {
    if (a == b) return 0;
    auto it = counts_.find(canonical(a, b));
    return it == counts_.end() ? 0 : it->second;
  }

  void merge(const CooccurrenceTable& other) {
    for (const auto& [k, n] : other.counts_) add(k.first, k.second, n);
  }

  const std::map<Key, std::int64_t>& counts() const { return counts_; }
  std::int64_t max_count() const { return max_count_; }
  std::size_t size() const { return counts_.size(); }
  bool empty() const { return counts_.empty(); }

  friend bool operator==(const CooccurrenceTable&, const CooccurrenceTable&) = default;

 private:
  std::map<Key, std::int64_t> counts_;
  std::int64_t max_count_ = 0;
};

struct CooccurrenceStats {
  std::size_t sentences = 0;
  std::size_t skipped = 0;
};

// Adds one sentence's distinct entity set to the table. Repeated mentions of
// an entity within the sentence count once.
inline void count_sentence(std::vector<std::string> entities,
                           CooccurrenceTable& table) {
  std::sort(entities.begin(), entities.end());
  entities.erase(std::unique(entities.begin(), entities.end()), entities.end());
  for (std::size_t a = 0; a < entities.size(); ++a) {
    for (std::size_t b = a + 1; b < entities.size(); ++b) {
      table.add(entities[a], entities[b]);
    }
  }
}

// Entity ids of one unlabeled-corpus line, or nullopt if unparseable.
inline std::optional<std::vector<std::string>> parse_unlabeled_entities(
    const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    if (!j.at("tokens").is_array()) return std::nullopt;
    std::vector<std::string> ids;
    for (const auto& m : j.at("entities")) ids.push_back(m.at("id").get<std::string>());
    return ids;
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

inline CooccurrenceTable count_cooccurrences(std::span<const std::string> lines,
                                             CooccurrenceStats* stats = nullptr) {
  CooccurrenceTable table;
  CooccurrenceStats st;
  for (const auto& line : lines) {
    if (detail::is_blank(line)) continue;
    auto ids = parse_unlabeled_entities(line);
    if (!ids) {
      ++st.skipped;
      continue;
    }
    ++st.sentences;
    count_sentence(std::move(*ids), table);
  }
  if (stats) *stats = st;
  return table;
}

// Single streaming pass over an unlabeled corpus.
inline CooccurrenceTable count_cooccurrences(std::istream& in,
                                             CooccurrenceStats* stats = nullptr) {
  CooccurrenceTable table;
  CooccurrenceStats st;
  std::string line;
  while (std::getline(in, line)) {
    if (detail::is_blank(line)) continue;
    auto ids = parse_unlabeled_entities(line);
    if (!ids) {
      ++st.skipped;
      continue;
    }
    ++st.sentences;
    count_sentence(std::move(*ids), table);
  }
  if (stats) *stats = st;
  return table;
}

// Shards `lines` into contiguous ranges counted by private tables on
// `workers` threads, then merges by summation.
inline CooccurrenceTable count_cooccurrences_sharded(
    std::span<const std::string> lines, std::size_t workers,
    CooccurrenceStats* stats = nullptr) {
  workers = std::max<std::size_t>(1, std::min(workers, lines.size()));
  if (workers <= 1) return count_cooccurrences(lines, stats);
  std::vector<CooccurrenceTable> tables(workers);
  std::vector<CooccurrenceStats> shard_stats(workers);
  std::vector<std::thread> threads;
  const std::size_t chunk = (lines.size() + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = std::min(lines.size(), w * chunk);
    const std::size_t end = std::min(lines.size(), begin + chunk);
    threads.emplace_back([&, w, begin, end] {
      tables[w] = count_cooccurrences(lines.subspan(begin, end - begin), &shard_stats[w]);
    });
  }
  for (auto& t : threads) t.join();
  CooccurrenceTable merged;
  CooccurrenceStats total;
  for (std::size_t w = 0; w < workers; ++w) {
    merged.merge(tables[w]);
    total.sentences += shard_stats[w].sentences;
    total.skipped += shard_stats[w].skipped;
  }
  if (stats) *stats = total;
  return merged;
}

inline constexpr const char* kCoocHeader = "#cooc v1";

inline void write_cooccurrence_tsv(const CooccurrenceTable& table, std::ostream& out) {
  out << kCoocHeader << '\n';
  for (const auto& [k, n] : table.counts()) {
    out << k.first << '\t' << k.second << '\t' << n << '\n';
  }
}

inline CooccurrenceTable read_cooccurrence_tsv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCoocHeader) {
    throw ArtifactVersionError("co-occurrence table: expected header '" +
                               std::string(kCoocHeader) + "'");
  }
  CooccurrenceTable table;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string a, b;
    std::int64_t n = 0;
    if (!std::getline(fields, a, '\t') || !std::getline(fields, b, '\t') ||
        !(fields >> n) || n < 0 || a == b) {
      throw ParseError(line_no, "bad co-occurrence row");
    }
    table.add(a, b, n);
  }
  return table;
}

// One (head, tail) pair's sentences. Training bags carry exactly one label;
// test bags carry the gold label set.
struct Bag {
  std::string head_entity;
  std::string tail_entity;
  std::vector<SentenceInstance> instances;
  std::set<std::string> labels;
};

inline std::string relation_or_na(const SentenceInstance& inst) {
  return inst.relation.value_or(kNoRelation);
}

// One bag per (head, tail, label) triple.
inline std::vector<Bag> assemble_training_bags(std::span<const SentenceInstance> instances) {
  using Key = std::tuple<std::string, std::string, std::string>;
  std::map<Key, Bag> groups;
  for (const auto& inst : instances) {
    const std::string rel = relation_or_na(inst);
    auto& bag = groups[Key{inst.head_entity, inst.tail_entity, rel}];
    if (bag.instances.empty()) {
      bag.head_entity = inst.head_entity;
      bag.tail_entity = inst.tail_entity;
      bag.labels = {rel};
    }
    bag.instances.push_back(inst);
  }
  std::vector<Bag> out;
  out.reserve(groups.size());
  for (auto& [_, bag] : groups) out.push_back(std::move(bag));
  return out;
}

// One bag per (head, tail) pair. A sentence repeated under several labels (the
// usual multi-label encoding of distant supervision data) is kept once.
inline std::vector<Bag> assemble_test_bags(std::span<const SentenceInstance> instances) {
  using Key = std::pair<std::string, std::string>;
  std::map<Key, Bag> groups;
  std::map<Key, std::set<std::tuple<std::vector<std::string>, std::size_t, std::size_t>>> seen;
  for (const auto& inst : instances) {
    const Key key{inst.head_entity, inst.tail_entity};
    auto& bag = groups[key];
    bag.head_entity = inst.head_entity;
    bag.tail_entity = inst.tail_entity;
    bag.labels.insert(relation_or_na(inst));
    if (seen[key].insert({inst.tokens, inst.head_pos, inst.tail_pos}).second) {
      bag.instances.push_back(inst);
    }
  }
  std::vector<Bag> out;
  out.reserve(groups.size());
  for (auto& [_, bag] : groups) out.push_back(std::move(bag));
  return out;
}

class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kUnkToken = "<unk>";

  Vocabulary() : Vocabulary(1) {}

  explicit Vocabulary(std::size_t min_count) : min_count_(min_count) {
    push(kPadToken);
    push(kUnkToken);
  }

  // Rebuilds from an explicit id-ordered token list (checkpoint load).
  static Vocabulary from_tokens(const std::vector<std::string>& tokens,
                                std::size_t min_count) {
    if (tokens.size() < 2 || tokens[0] != kPadToken || tokens[1] != kUnkToken) {
      throw std::invalid_argument("Vocabulary: reserved tokens missing");
    }
    Vocabulary v(min_count);
    for (std::size_t i = 2; i < tokens.size(); ++i) v.push(tokens[i]);
    return v;
  }

  std::size_t id(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
  }

  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }
  std::size_t min_count() const { return min_count_; }

  std::vector<std::size_t> encode(std::span<const std::string> tokens) const {
    std::vector<std::size_t> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(id(t));
    return out;
  }

 private:
  void push(const std::string& token) {
    if (ids_.count(token)) throw std::invalid_argument("Vocabulary: duplicate token " + token);
    ids_.emplace(token, tokens_.size());
    tokens_.push_back(token);
  }

  std::size_t min_count_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
};

// Ids are assigned by descending frequency, ties broken lexicographically.
inline Vocabulary build_vocab(std::span<const SentenceInstance> instances,
                              std::size_t min_count) {
  if (min_count < 1) throw std::invalid_argument("build_vocab: minCount must be >= 1");
  std::map<std::string, std::size_t> freq;
  for (const auto& inst : instances) {
    for (const auto& t : inst.tokens) ++freq[t];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [t, n] : freq) {
    if (n >= min_count && t != Vocabulary::kPadToken && t != Vocabulary::kUnkToken) {
      kept.emplace_back(t, n);
    }
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens{Vocabulary::kPadToken, Vocabulary::kUnkToken};
  for (auto& [t, _] : kept) tokens.push_back(t);
  return Vocabulary::from_tokens(tokens, min_count);
}

}  // namespace imrel
