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

// Quadratic reference counter for sentence-level co-occurrence.

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace imrel::oracle {

inline std::string unlabeled_line(const std::vector<std::string>& ids) {
  nlohmann::json ents = nlohmann::json::array();
  for (std::size_t i = 0; i < ids.size(); ++i) ents.push_back({{"id", ids[i]}, {"pos", i}});
  return nlohmann::json{{"tokens", std::vector<std::string>(ids.size(), "w")},
                        {"entities", ents}}
      .dump();
}

inline std::vector<std::vector<std::string>> random_sentences(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> ent(0, 29);
  std::uniform_int_distribution<int> len(0, 7);
  std::vector<std::vector<std::string>> out(n);
  for (auto& s : out) {
    const int m = len(rng);
    for (int i = 0; i < m; ++i) s.push_back("e" + std::to_string(ent(rng)));
  }
  return out;
}

// Nested loop over mention pairs with a per-sentence seen set.
inline std::map<std::pair<std::string, std::string>, std::int64_t> brute_force(
    const std::vector<std::vector<std::string>>& sentences) {
  std::map<std::pair<std::string, std::string>, std::int64_t> counts;
  for (const auto& s : sentences) {
    std::vector<std::pair<std::string, std::string>> seen;
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (std::size_t j = 0; j < s.size(); ++j) {
        if (s[i] >= s[j]) continue;
        const std::pair<std::string, std::string> key{s[i], s[j]};
        if (std::find(seen.begin(), seen.end(), key) == seen.end()) seen.push_back(key);
      }
    }
    for (const auto& k : seen) ++counts[k];
  }
  return counts;
}

}  // namespace imrel::oracle
