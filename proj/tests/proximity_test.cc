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

#include "imrel/proximity.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

namespace imrel {
namespace {

TEST(EdgeWeight, SpotValues) {
  EXPECT_EQ(edge_weight(50, 50), 1.0);
  EXPECT_NEAR(edge_weight(10, 100), 0.5, 1e-12);
  EXPECT_NEAR(edge_weight(2, 1024), 0.1, 1e-12);
}

TEST(EdgeWeight, Domain) {
  EXPECT_THROW(edge_weight(1, 10), std::invalid_argument);
  EXPECT_THROW(edge_weight(5, 1), std::invalid_argument);
  EXPECT_THROW(edge_weight(11, 10), std::invalid_argument);
}

TEST(EdgeWeight, Monotone) {
  for (std::int64_t m : {2, 7, 100, 12345}) {
    for (std::int64_t c = 2; c < m && c < 500; ++c) {
      EXPECT_LT(edge_weight(c, m), edge_weight(c + 1, m));
    }
  }
}

CooccurrenceTable example_table() {
  CooccurrenceTable t;
  t.add("A", "B", 10);
  t.add("B", "C", 2);
  t.add("C", "D", 1);
  return t;
}

TEST(BuildGraph, Example) {
  const auto g = build_graph(example_table(), 2);
  EXPECT_EQ(g.vertices, (std::vector<std::string>{"A", "B", "C"}));
  ASSERT_EQ(g.edges.size(), 2u);
  EXPECT_EQ(g.edges[0].weight, 1.0);
  EXPECT_NEAR(g.edges[1].weight, std::log(2.0) / std::log(10.0), 1e-12);
  EXPECT_NEAR(g.edges[1].weight, 0.3010, 1e-4);
  EXPECT_NEAR(g.weighted_degree[g.index_of("B")], 1.0 + g.edges[1].weight, 1e-15);
}

TEST(BuildGraph, Errors) {
  EXPECT_THROW(build_graph(example_table(), 11), EmptyGraphError);
  EXPECT_THROW(build_graph(example_table(), 1), std::invalid_argument);
}

TEST(BuildGraph, SingleEdgeHasUnitWeight) {
  const auto g = build_graph(example_table(), 3);
  ASSERT_EQ(g.edges.size(), 1u);
  EXPECT_EQ(g.edges[0].weight, 1.0);
}

TEST(BuildGraph, RandomTablesKeepInvariants) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> e(0, 40), c(1, 300);
  for (int trial = 0; trial < 20; ++trial) {
    CooccurrenceTable t;
    for (int i = 0; i < 200; ++i) {
      const int a = e(rng), b = e(rng);
      if (a != b) t.add("v" + std::to_string(a), "v" + std::to_string(b), c(rng));
    }
    const auto g = build_graph(t, 3);
    double mx = 0.0;
    for (const auto& edge : g.edges) {
      EXPECT_GE(edge.count, 3);
      EXPECT_GT(edge.weight, 0.0);
      EXPECT_LE(edge.weight, 1.0);
      mx = std::max(mx, edge.weight);
    }
    EXPECT_EQ(mx, 1.0);
  }
}

TEST(GraphTsv, RoundTrip) {
  const auto g = build_graph(example_table(), 2);
  std::stringstream ss;
  write_graph_tsv(g, ss);
  EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), "#proxgraph v1 threshold=2");
  const auto back = read_graph_tsv(ss);
  EXPECT_EQ(back.vertices, g.vertices);
  ASSERT_EQ(back.edges.size(), g.edges.size());
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    EXPECT_EQ(back.edges[i].weight, g.edges[i].weight);
  }
  std::istringstream bad("#proxgraph v9 threshold=2\n");
  EXPECT_THROW(read_graph_tsv(bad), ArtifactVersionError);
}

ProximityGraph degrees(double a, double b) {
  ProximityGraph g;
  g.vertices = {"x", "y"};
  g.weighted_degree = {a, b};
  return g;
}

TEST(Noise, Values) {
  auto p = noise_distribution(degrees(1, 1), 0.75);
  EXPECT_NEAR(p[0], 0.5, 1e-12);
  p = noise_distribution(degrees(16, 1), 0.75);
  EXPECT_NEAR(p[0], 8.0 / 9.0, 1e-12);
  EXPECT_NEAR(p[1], 1.0 / 9.0, 1e-12);
  p = noise_distribution(degrees(16, 1), 0.0);
  EXPECT_NEAR(p[0], 0.5, 1e-12);
}

std::vector<double> frequencies(const std::vector<double>& w, std::size_t draws,
                                std::uint64_t seed) {
  AliasSampler s(w);
  std::mt19937_64 rng(seed);
  std::vector<double> f(w.size(), 0.0);
  for (std::size_t i = 0; i < draws; ++i) f[s.draw(rng)] += 1.0;
  for (double& x : f) x /= static_cast<double>(draws);
  return f;
}

TEST(Alias, SingleOutcome) {
  const auto f = frequencies({2.5}, 1000, 1);
  EXPECT_EQ(f[0], 1.0);
}

TEST(Alias, Uniform) {
  for (double x : frequencies({1, 1, 1, 1}, 100000, 3)) {
    EXPECT_GE(x, 0.24);
    EXPECT_LE(x, 0.26);
  }
}

TEST(Alias, ThreeToOne) {
  const auto f = frequencies({3, 1}, 100000, 4);
  EXPECT_GE(f[0], 0.74);
  EXPECT_LE(f[0], 0.76);
}

TEST(Alias, TotalVariation) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  std::vector<double> w(37);
  for (double& x : w) x = u(rng);
  w[5] = 0.0;
  const auto f = frequencies(w, 100000, 9);
  double total = 0.0;
  for (double x : w) total += x;
  double l1 = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) l1 += std::abs(f[i] - w[i] / total);
  EXPECT_LE(l1, 0.02);
  EXPECT_EQ(f[5], 0.0);
}

TEST(Alias, Errors) {
  EXPECT_THROW(AliasSampler(std::vector<double>{}), std::invalid_argument);
  EXPECT_THROW(AliasSampler(std::vector<double>{0, 0}), std::invalid_argument);
}

}  // namespace
}  // namespace imrel
