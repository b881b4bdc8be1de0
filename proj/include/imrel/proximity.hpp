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
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "imrel/corpus.hpp"
#include "imrel/errors.hpp"

namespace imrel {

inline constexpr std::int64_t kDefaultGraphThreshold = 3;

// log(co) / log(maxCo). Counts below 2 are rejected since log(1) = 0.
inline double edge_weight(std::int64_t co, std::int64_t max_co) {
  if (co < 2 || max_co < 2 || co > max_co) {
    throw std::invalid_argument("edge_weight: require 2 <= co <= maxCo");
  }
  if (co == max_co) return 1.0;
  return std::log(static_cast<double>(co)) / std::log(static_cast<double>(max_co));
}

struct GraphEdge {
  std::size_t source;
  std::size_t target;
  std::int64_t count;
  double weight;
};

// Undirected weighted entity graph. Vertex indices follow the sorted order of
// entity ids; edges are sorted by (id(source), id(target)) with source < target.
struct ProximityGraph {
  std::vector<std::string> vertices;
  std::vector<GraphEdge> edges;
  std::vector<double> weighted_degree;
  std::int64_t threshold = kDefaultGraphThreshold;

  std::size_t vertex_count() const { return vertices.size(); }

  // Dense index of `id`, or vertex_count() if absent.
  std::size_t index_of(const std::string& id) const {
    auto it = std::lower_bound(vertices.begin(), vertices.end(), id);
    if (it == vertices.end() || *it != id) return vertices.size();
    return static_cast<std::size_t>(it - vertices.begin());
  }
};

inline ProximityGraph build_graph(const CooccurrenceTable& table, std::int64_t threshold) {
  if (threshold < 2) throw std::invalid_argument("build_graph: threshold must be >= 2");
  std::int64_t max_co = 0;
  std::vector<std::pair<const CooccurrenceTable::Key*, std::int64_t>> kept;
  for (const auto& [key, n] : table.counts()) {
    if (n >= threshold) {
      kept.emplace_back(&key, n);
      max_co = std::max(max_co, n);
    }
  }
  if (kept.empty()) {
    throw EmptyGraphError("build_graph: no entity pair reaches threshold " +
                          std::to_string(threshold));
  }
  ProximityGraph g;
  g.threshold = threshold;
  for (const auto& [key, _] : kept) {
    g.vertices.push_back(key->first);
    g.vertices.push_back(key->second);
  }
  std::sort(g.vertices.begin(), g.vertices.end());
  g.vertices.erase(std::unique(g.vertices.begin(), g.vertices.end()), g.vertices.end());
  g.weighted_degree.assign(g.vertices.size(), 0.0);
  // kept is already in (idA, idB) order because the table is an ordered map.
  for (const auto& [key, n] : kept) {
    const std::size_t a = g.index_of(key->first);
    const std::size_t b = g.index_of(key->second);
    const double w = edge_weight(n, max_co);
    g.edges.push_back({a, b, n, w});
    g.weighted_degree[a] += w;
    g.weighted_degree[b] += w;
  }
  return g;
}

// P(v) proportional to weightedDegree(v)^power.
inline std::vector<double> noise_distribution(const ProximityGraph& graph, double power) {
  if (graph.vertex_count() == 0) throw std::invalid_argument("noise_distribution: empty graph");
  std::vector<double> p(graph.vertex_count());
  double z = 0.0;
  for (std::size_t v = 0; v < p.size(); ++v) {
    p[v] = std::pow(graph.weighted_degree[v], power);
    z += p[v];
  }
  for (double& x : p) x /= z;
  return p;
}

// Walker/Vose alias table: O(n) construction, O(1) draws.
class AliasSampler {
 public:
  AliasSampler() = default;

  explicit AliasSampler(std::span<const double> weights)
      : weights_(weights.begin(), weights.end()) {
    const std::size_t n = weights_.size();
    double total = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0) || !std::isfinite(w)) {
        throw std::invalid_argument("AliasSampler: weights must be finite and nonnegative");
      }
      total += w;
    }
    if (n == 0 || !(total > 0.0)) {
      throw std::invalid_argument("AliasSampler: need at least one positive weight");
    }
    prob_.assign(n, 0.0);
    alias_.assign(n, 0);
    std::vector<double> scaled(n);
    std::vector<std::size_t> small, large;
    for (std::size_t i = 0; i < n; ++i) {
      scaled[i] = weights_[i] * static_cast<double>(n) / total;
      (scaled[i] < 1.0 ? small : large).push_back(i);
    }
    while (!small.empty() && !large.empty()) {
      const std::size_t s = small.back();
      small.pop_back();
      const std::size_t l = large.back();
      prob_[s] = scaled[s];
      alias_[s] = l;
      scaled[l] = (scaled[l] + scaled[s]) - 1.0;
      if (scaled[l] < 1.0) {
        large.pop_back();
        small.push_back(l);
      }
    }
    // Leftovers are 1 up to rounding.
    for (std::size_t i : large) prob_[i] = 1.0, alias_[i] = i;
    for (std::size_t i : small) prob_[i] = 1.0, alias_[i] = i;
  }

  template <typename Rng>
  std::size_t draw(Rng& rng) const {
    std::uniform_int_distribution<std::size_t> column(0, prob_.size() - 1);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    const std::size_t k = column(rng);
    return coin(rng) < prob_[k] ? k : alias_[k];
  }

  std::size_t size() const { return prob_.size(); }
  const std::vector<double>& weights() const { return weights_; }

 private:
  std::vector<double> weights_;
  std::vector<double> prob_;
  std::vector<std::size_t> alias_;
};

inline std::string graph_header(std::int64_t threshold) {
  return "#proxgraph v1 threshold=" + std::to_string(threshold);
}

inline void write_graph_tsv(const ProximityGraph& g, std::ostream& out) {
  out << graph_header(g.threshold) << '\n';
  char buf[64];
  for (const auto& e : g.edges) {
    auto res = std::to_chars(buf, buf + sizeof(buf), e.weight);
    out << g.vertices[e.source] << '\t' << g.vertices[e.target] << '\t' << e.count
        << '\t' << std::string_view(buf, res.ptr - buf) << '\n';
  }
}

// Rebuilds the graph from its export. Weights are recomputed from the counts.
inline ProximityGraph read_graph_tsv(std::istream& in) {
  std::string line;
  const std::string prefix = "#proxgraph v1 threshold=";
  if (!std::getline(in, line) || line.rfind(prefix, 0) != 0) {
    throw ArtifactVersionError("proximity graph: expected header '" + prefix + "<t>'");
  }
  std::int64_t threshold = 0;
  try {
    threshold = std::stoll(line.substr(prefix.size()));
  } catch (const std::exception&) {
    throw ArtifactVersionError("proximity graph: bad threshold in header");
  }
  CooccurrenceTable table;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string a, b;
    std::int64_t n = 0;
    if (!std::getline(fields, a, '\t') || !std::getline(fields, b, '\t') || !(fields >> n)) {
      throw ParseError(line_no, "bad graph row");
    }
    table.add(a, b, n);
  }
  return build_graph(table, threshold);
}

}  // namespace imrel
