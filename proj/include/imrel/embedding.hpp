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

// Entity embeddings over the proximity graph.
//
// Two models are trained independently by edge sampling:
//   first order:  ascent on w_ij [log s(u_i.u_j) + sum_n log s(-u_i.u_n)]
//                 with edges drawn uniformly, so the expectation is the
//                 weighted first-order objective;
//   second order: ascent on log s(c_j.u_i) + sum_n log s(-c_n.u_i) with
//                 edges drawn proportionally to w_ij, using separate vertex
//                 (u) and context (c) tables.
// Each exported entity vector is the concatenation of the L2-normalized
// first-order and second-order vertex vectors. The implicit mutual relation
// of (e_i, e_j) is U_j - U_i.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "imrel/errors.hpp"
#include "imrel/numerics.hpp"
#include "imrel/proximity.hpp"

namespace imrel {

struct EmbeddingConfig {
  std::size_t first_dim = 64;
  std::size_t second_dim = 64;
  std::size_t negatives = 5;
  std::uint64_t total_samples = 1'000'000;
  double initial_lr = 0.025;
  double lr_floor = 1e-4;  // fraction of initial_lr
  double noise_power = 0.75;
  std::uint64_t seed = 1;
  std::size_t workers = 1;

  std::size_t entity_dim() const { return first_dim + second_dim; }

  void validate() const {
    if (first_dim == 0 || second_dim == 0) {
      throw std::invalid_argument("EmbeddingConfig: dimensions must be positive");
    }
    if (negatives < 1) throw std::invalid_argument("EmbeddingConfig: K must be >= 1");
    if (!(initial_lr > 0.0)) throw std::invalid_argument("EmbeddingConfig: lr must be positive");
    if (workers < 1) throw std::invalid_argument("EmbeddingConfig: workers must be >= 1");
  }
};

// An oriented edge draw: `source` plays u_i, `target` plays u_j.
struct EdgeSample {
  std::size_t source;
  std::size_t target;
  double weight = 1.0;
};

inline double first_order_prob(std::span<const double> ui, std::span<const double> uj) {
  if (ui.size() != uj.size()) throw std::invalid_argument("first_order_prob: dim mismatch");
  return sigmoid(dot(ui, uj));
}

namespace detail {

// One exact gradient-ascent step on
//   scale * [log s(c_t.u) + sum_n log s(-c_n.u)]
// where `u` is row `source` of `vertex` and the c rows come from `context`
// (which may be the same table). All scores are taken before any row moves.
// Returns the objective value at the pre-step point.
inline double contrastive_step(Tensor& vertex, Tensor& context, std::size_t source,
                               std::size_t target, std::span<const std::size_t> negatives,
                               double scale, double lr) {
  auto u = vertex.row(source);
  const std::size_t k = negatives.size() + 1;
  auto row_of = [&](std::size_t m) { return m == 0 ? target : negatives[m - 1]; };
  std::vector<double> coeff(k);
  double objective = 0.0;
  for (std::size_t m = 0; m < k; ++m) {
    const double f = dot(u, context.row(row_of(m)));
    objective += m == 0 ? log_sigmoid(f) : log_sigmoid(-f);
    coeff[m] = scale * ((m == 0 ? 1.0 : 0.0) - sigmoid(f));
  }
  objective *= scale;
  if (lr == 0.0) return objective;

  const std::vector<double> old_u(u.begin(), u.end());
  std::vector<double> err(u.size(), 0.0);
  for (std::size_t m = 0; m < k; ++m) axpy(coeff[m], context.row(row_of(m)), err);
  for (std::size_t m = 0; m < k; ++m) axpy(lr * coeff[m], old_u, context.row(row_of(m)));
  axpy(lr, err, u);
  return objective;
}

}  // namespace detail

// First-order per-sample objective w_ij [log s(u_i.u_j) + sum_n log s(-u_i.u_n)].
inline double first_order_objective(const Tensor& emb, const EdgeSample& e,
                                    std::span<const std::size_t> negatives) {
  double obj = log_sigmoid(dot(emb.row(e.source), emb.row(e.target)));
  for (std::size_t n : negatives) obj += log_sigmoid(-dot(emb.row(e.source), emb.row(n)));
  return e.weight * obj;
}

// Accumulates d(first_order_objective)/d(emb) into `grad`.
inline void first_order_gradient(const Tensor& emb, const EdgeSample& e,
                                 std::span<const std::size_t> negatives, Tensor& grad) {
  const auto ui = emb.row(e.source);
  const double gp = e.weight * (1.0 - sigmoid(dot(ui, emb.row(e.target))));
  axpy(gp, emb.row(e.target), grad.row(e.source));
  axpy(gp, ui, grad.row(e.target));
  for (std::size_t n : negatives) {
    const double gn = -e.weight * sigmoid(dot(ui, emb.row(n)));
    axpy(gn, emb.row(n), grad.row(e.source));
    axpy(gn, ui, grad.row(n));
  }
}

// Ascent step on the first-order objective; updates u_i, u_j and the negatives.
inline double first_order_step(Tensor& emb, const EdgeSample& e,
                               std::span<const std::size_t> negatives, double lr) {
  return detail::contrastive_step(emb, emb, e.source, e.target, negatives, e.weight, lr);
}

// log s(c_j.u_i) + sum_n log s(-c_n.u_i)
inline double second_order_term(const Tensor& vertex, const Tensor& context,
                                const EdgeSample& e, std::span<const std::size_t> negatives) {
  const auto ui = vertex.row(e.source);
  double obj = log_sigmoid(dot(context.row(e.target), ui));
  for (std::size_t n : negatives) obj += log_sigmoid(-dot(context.row(n), ui));
  return obj;
}

inline void second_order_gradient(const Tensor& vertex, const Tensor& context,
                                  const EdgeSample& e, std::span<const std::size_t> negatives,
                                  Tensor& vertex_grad, Tensor& context_grad) {
  const auto ui = vertex.row(e.source);
  const double gp = 1.0 - sigmoid(dot(context.row(e.target), ui));
  axpy(gp, context.row(e.target), vertex_grad.row(e.source));
  axpy(gp, ui, context_grad.row(e.target));
  for (std::size_t n : negatives) {
    const double gn = -sigmoid(dot(context.row(n), ui));
    axpy(gn, context.row(n), vertex_grad.row(e.source));
    axpy(gn, ui, context_grad.row(n));
  }
}

inline double second_order_step(Tensor& vertex, Tensor& context, const EdgeSample& e,
                                std::span<const std::size_t> negatives, double lr) {
  return detail::contrastive_step(vertex, context, e.source, e.target, negatives, 1.0, lr);
}

// Exported entity vectors, one row per entity id (sorted).
struct EntityVectors {
  std::vector<std::string> ids;
  Tensor vectors;  // count x width; empty when count == 0
  std::size_t width = 0;

  std::size_t dim() const { return width; }
  std::size_t count() const { return ids.size(); }

  std::size_t index_of(const std::string& id) const {
    auto it = std::lower_bound(ids.begin(), ids.end(), id);
    if (it == ids.end() || *it != id) return ids.size();
    return static_cast<std::size_t>(it - ids.begin());
  }
};

struct EmbeddingTable {
  std::vector<std::string> entities;
  Tensor first_order;    // n x d1
  Tensor second_vertex;  // n x d2
  Tensor second_context; // n x d2

  EntityVectors export_vectors() const;
};

namespace detail {

inline void l2_normalize_into(std::span<const double> src, std::span<double> dst) {
  double norm = 0.0;
  for (double v : src) norm += v * v;
  norm = std::sqrt(norm);
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = norm > 0.0 ? src[i] / norm : 0.0;
}

}  // namespace detail

inline EntityVectors EmbeddingTable::export_vectors() const {
  EntityVectors out;
  out.ids = entities;
  const std::size_t d1 = first_order.dim(1);
  const std::size_t d2 = second_vertex.dim(1);
  out.width = d1 + d2;
  out.vectors = Tensor({entities.size(), d1 + d2}, 0.0);
  for (std::size_t v = 0; v < entities.size(); ++v) {
    auto row = out.vectors.row(v);
    detail::l2_normalize_into(first_order.row(v), row.subspan(0, d1));
    detail::l2_normalize_into(second_vertex.row(v), row.subspan(d1, d2));
  }
  return out;
}

// Mean objective per tenth of training, for both models (single worker or
// worker 0 only).
struct EmbeddingTrace {
  std::vector<double> first_order_windows;
  std::vector<double> second_order_windows;
};

inline constexpr std::size_t kTraceWindows = 10;

namespace detail {

template <typename Rng>
void draw_negatives(const AliasSampler& noise, const EdgeSample& e, std::size_t k,
                    Rng& rng, std::vector<std::size_t>& out) {
  out.clear();
  for (std::size_t i = 0; i < k; ++i) {
    // Redraw on collision with an endpoint; give up on degenerate graphs.
    for (int attempt = 0; attempt < 64; ++attempt) {
      const std::size_t n = noise.draw(rng);
      if (n != e.source && n != e.target) {
        out.push_back(n);
        break;
      }
    }
  }
}

enum class Objective { kFirst, kSecond };

// Runs `samples` edge draws for one objective. Called concurrently in
// multi-worker mode: rows are read and written without synchronization
// (Hogwild updates, last write wins).
inline void run_worker(Objective objective, const ProximityGraph& graph,
                       const AliasSampler& edge_sampler, const AliasSampler& noise,
                       const EmbeddingConfig& config, std::uint64_t worker_seed,
                       std::uint64_t samples, std::uint64_t schedule_offset,
                       std::uint64_t schedule_total, std::size_t schedule_stride,
                       Tensor& a, Tensor& b, std::vector<double>* windows) {
  std::mt19937_64 rng(worker_seed);
  std::uniform_int_distribution<std::size_t> uniform_edge(0, graph.edges.size() - 1);
  std::bernoulli_distribution flip(0.5);
  std::vector<std::size_t> negatives;
  negatives.reserve(config.negatives);
  std::vector<double> window_sum(kTraceWindows, 0.0);
  std::vector<std::uint64_t> window_n(kTraceWindows, 0);
  for (std::uint64_t t = 0; t < samples; ++t) {
    const double progress =
        static_cast<double>(schedule_offset + t * schedule_stride) /
        static_cast<double>(schedule_total);
    const double lr = config.initial_lr * std::max(config.lr_floor, 1.0 - progress);
    const std::size_t idx =
        objective == Objective::kFirst ? uniform_edge(rng) : edge_sampler.draw(rng);
    const GraphEdge& ge = graph.edges[idx];
    EdgeSample e{ge.source, ge.target, ge.weight};
    if (flip(rng)) std::swap(e.source, e.target);
    draw_negatives(noise, e, config.negatives, rng, negatives);
    const double obj = objective == Objective::kFirst
                           ? first_order_step(a, e, negatives, lr)
                           : second_order_step(a, b, e, negatives, lr);
    if (windows) {
      const std::size_t w = std::min<std::size_t>(kTraceWindows - 1, t * kTraceWindows / samples);
      window_sum[w] += obj;
      ++window_n[w];
    }
  }
  if (windows) {
    windows->assign(kTraceWindows, 0.0);
    for (std::size_t w = 0; w < kTraceWindows; ++w) {
      if (window_n[w]) (*windows)[w] = window_sum[w] / static_cast<double>(window_n[w]);
    }
  }
}

inline void train_objective(Objective objective, const ProximityGraph& graph,
                            const AliasSampler& edge_sampler, const AliasSampler& noise,
                            const EmbeddingConfig& config, std::uint64_t seed, Tensor& a,
                            Tensor& b, std::vector<double>* windows) {
  const std::uint64_t total = config.total_samples;
  if (total == 0) return;
  const std::size_t workers = config.workers;
  if (workers == 1) {
    run_worker(objective, graph, edge_sampler, noise, config, seed, total, 0, total, 1, a, b,
               windows);
    return;
  }
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::uint64_t share = total / workers + (w < total % workers ? 1 : 0);
    threads.emplace_back([&, w, share] {
      run_worker(objective, graph, edge_sampler, noise, config, seed + 7919 * (w + 1), share, w,
                 total, workers, a, b, w == 0 ? windows : nullptr);
    });
  }
  for (auto& t : threads) t.join();
}

}  // namespace detail

// Initialization only: vertex-style tables uniform in [-0.5/d, 0.5/d],
// context table zero.
inline EmbeddingTable init_embeddings(const ProximityGraph& graph, const EmbeddingConfig& config) {
  config.validate();
  EmbeddingTable table;
  table.entities = graph.vertices;
  const std::size_t n = graph.vertex_count();
  std::mt19937_64 rng(config.seed);
  auto uniform_table = [&](std::size_t d) {
    Tensor t({n, d}, 0.0);
    std::uniform_real_distribution<double> u(-0.5 / static_cast<double>(d),
                                             0.5 / static_cast<double>(d));
    for (double& v : t.storage()) v = u(rng);
    return t;
  };
  table.first_order = uniform_table(config.first_dim);
  table.second_vertex = uniform_table(config.second_dim);
  table.second_context = Tensor({n, config.second_dim}, 0.0);
  return table;
}

inline EmbeddingTable train_embeddings(const ProximityGraph& graph, const EmbeddingConfig& config,
                                       EmbeddingTrace* trace = nullptr) {
  if (graph.edges.empty()) throw EmptyGraphError("train_embeddings: graph has no edges");
  EmbeddingTable table = init_embeddings(graph, config);
  std::vector<double> edge_weights;
  edge_weights.reserve(graph.edges.size());
  for (const auto& e : graph.edges) edge_weights.push_back(e.weight);
  const AliasSampler edge_sampler(edge_weights);
  const AliasSampler noise(noise_distribution(graph, config.noise_power));
  EmbeddingTrace local;
  detail::train_objective(detail::Objective::kFirst, graph, edge_sampler, noise, config,
                          config.seed ^ 0x9e3779b97f4a7c15ULL, table.first_order,
                          table.first_order, &local.first_order_windows);
  detail::train_objective(detail::Objective::kSecond, graph, edge_sampler, noise, config,
                          config.seed ^ 0xc2b2ae3d27d4eb4fULL, table.second_vertex,
                          table.second_context, &local.second_order_windows);
  if (trace) *trace = std::move(local);
  return table;
}

// Implicit mutual relation U_j - U_i. Entities missing from `vectors`
// contribute zero and raise `out_of_graph`.
struct MutualRelation {
  std::vector<double> values;
  bool out_of_graph = false;
};

inline MutualRelation mutual_relation(const EntityVectors& vectors, const std::string& head,
                                      const std::string& tail) {
  MutualRelation mr;
  mr.values.assign(vectors.dim(), 0.0);
  const std::size_t i = vectors.index_of(head);
  const std::size_t j = vectors.index_of(tail);
  mr.out_of_graph = i == vectors.count() || j == vectors.count();
  if (j < vectors.count()) axpy(1.0, vectors.vectors.row(j), mr.values);
  if (i < vectors.count()) axpy(-1.0, vectors.vectors.row(i), mr.values);
  return mr;
}

inline std::string embedding_header(std::size_t count, std::size_t dim) {
  return "#entemb v1 " + std::to_string(count) + " " + std::to_string(dim);
}

inline void write_entity_vectors(const EntityVectors& ev, std::ostream& out) {
  out << embedding_header(ev.count(), ev.dim()) << '\n';
  char buf[32];
  for (std::size_t v = 0; v < ev.count(); ++v) {
    out << ev.ids[v] << '\t';
    const auto row = ev.vectors.row(v);
    for (std::size_t k = 0; k < row.size(); ++k) {
      std::snprintf(buf, sizeof(buf), "%.9g", row[k]);
      if (k) out << ' ';
      out << buf;
    }
    out << '\n';
  }
}

inline EntityVectors read_entity_vectors(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ArtifactVersionError("entity embeddings: empty file");
  std::istringstream header(line);
  std::string magic, version;
  std::size_t count = 0, dim = 0;
  if (!(header >> magic >> version >> count >> dim) || magic != "#entemb" || version != "v1" ||
      dim == 0) {
    throw ArtifactVersionError("entity embeddings: expected header '#entemb v1 <count> <dim>'");
  }
  EntityVectors ev;
  std::vector<double> values;
  values.reserve(count * dim);
  std::size_t line_no = 1;
  std::string prev;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(line_no, "missing tab");
    std::string id = line.substr(0, tab);
    if (!ev.ids.empty() && !(prev < id)) throw ParseError(line_no, "ids not strictly sorted");
    prev = id;
    ev.ids.push_back(std::move(id));
    std::istringstream nums(line.substr(tab + 1));
    std::size_t got = 0;
    double x = 0.0;
    while (nums >> x) {
      values.push_back(x);
      ++got;
    }
    if (got != dim) throw ParseError(line_no, "expected " + std::to_string(dim) + " values");
  }
  if (ev.ids.size() != count) {
    throw ParseError(line_no, "header count " + std::to_string(count) + " but read " +
                                  std::to_string(ev.ids.size()));
  }
  ev.width = dim;
  if (count) ev.vectors = Tensor({count, dim}, std::move(values));
  return ev;
}

}  // namespace imrel
