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

// Bag-level relation classifier.
//
//   sentence  -> [word | head-position | tail-position] rows
//             -> window convolution, piecewise max pooling, tanh  (x_j)
//   bag       -> alpha = softmax_j(x_j . diag(A) . r),  X = sum_j alpha_j x_j
//   heads     RE   = softmax(W_RE X + b_RE)
//             C_MR = softmax(W_MR MR + b_MR)
//             C_T  = softmax(W_T T + b_T),  T = [mean type rows of head | tail]
//   fusion    P = softmax(w * (alpha C_MR + beta C_T + gamma RE) + b)
//
// Gradients are written by hand; `backward` mirrors `forward_bag_train`.

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "imrel/corpus.hpp"
#include "imrel/embedding.hpp"
#include "imrel/errors.hpp"
#include "imrel/numerics.hpp"

namespace imrel {

enum class InferenceAttention { kPerRelation, kUniform };

struct ModelConfig {
  std::size_t vocab_size = 2;
  std::size_t word_dim = 50;
  std::size_t pos_dim = 5;
  std::size_t max_length = kMaxSentenceLength;
  std::size_t filters = 230;
  std::size_t window = 3;
  std::size_t type_dim = 20;
  std::size_t num_types = 38;
  std::size_t entity_dim = 128;
  std::size_t num_relations = 2;
  double dropout = 0.5;
  InferenceAttention inference_attention = InferenceAttention::kPerRelation;
  bool use_mutual_relation = true;

  std::size_t input_dim() const { return word_dim + 2 * pos_dim; }
  std::size_t encoding_dim() const { return 3 * filters; }
  std::size_t position_buckets() const { return 2 * max_length + 1; }
  std::size_t padding() const { return window / 2; }

  void validate() const {
    if (vocab_size < 2 || word_dim == 0 || pos_dim == 0 || max_length == 0 || filters == 0 ||
        type_dim == 0 || num_types == 0 || entity_dim == 0 || num_relations < 2) {
      throw std::invalid_argument("ModelConfig: dimensions must be positive (m >= 2)");
    }
    if (window == 0 || window % 2 == 0) {
      throw std::invalid_argument("ModelConfig: window size must be odd");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) {
      throw std::invalid_argument("ModelConfig: dropout must be in [0, 1)");
    }
  }
};

// Relation label inventory; NA is always id 0.
class RelationSet {
 public:
  RelationSet() : names_{kNoRelation} { index_[kNoRelation] = 0; }

  static RelationSet from_names(const std::vector<std::string>& names) {
    if (names.empty() || names[0] != kNoRelation) {
      throw std::invalid_argument("RelationSet: first relation must be NA");
    }
    RelationSet rs;
    for (std::size_t i = 1; i < names.size(); ++i) rs.add(names[i]);
    return rs;
  }

  // NA first, remaining labels in lexicographic order.
  static RelationSet from_instances(std::span<const SentenceInstance> instances) {
    std::set<std::string> labels;
    for (const auto& inst : instances) labels.insert(relation_or_na(inst));
    labels.erase(kNoRelation);
    RelationSet rs;
    for (const auto& l : labels) rs.add(l);
    return rs;
  }

  std::optional<std::size_t> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t id(const std::string& name) const {
    auto r = find(name);
    if (!r) throw std::invalid_argument("unknown relation label: " + name);
    return *r;
  }

  const std::string& name(std::size_t id) const { return names_.at(id); }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }

 private:
  void add(const std::string& name) {
    if (index_.count(name)) throw std::invalid_argument("RelationSet: duplicate " + name);
    index_[name] = names_.size();
    names_.push_back(name);
  }

  std::vector<std::string> names_;
  std::map<std::string, std::size_t> index_;
};

// Coarse entity types: a fixed inventory plus per-entity type sets.
class TypeCatalog {
 public:
  TypeCatalog() = default;

  explicit TypeCatalog(std::vector<std::string> inventory) : inventory_(std::move(inventory)) {
    for (std::size_t i = 0; i < inventory_.size(); ++i) {
      if (!index_.emplace(inventory_[i], i).second) {
        throw std::invalid_argument("TypeCatalog: duplicate type " + inventory_[i]);
      }
    }
  }

  // `inventory`: one type name per line. `catalog`: "entityId<TAB>t1,t2,...".
  static TypeCatalog load(std::istream& inventory, std::istream& catalog,
                          std::size_t expected_types) {
    std::vector<std::string> names;
    std::string line;
    while (std::getline(inventory, line)) {
      if (!line.empty()) names.push_back(line);
    }
    if (names.size() != expected_types) {
      throw ParseError(names.size(), "type inventory has " + std::to_string(names.size()) +
                                         " types, expected " + std::to_string(expected_types));
    }
    TypeCatalog tc(std::move(names));
    std::size_t line_no = 0;
    while (std::getline(catalog, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw ParseError(line_no, "type catalog row needs a tab");
      std::vector<std::string> types;
      std::istringstream list(line.substr(tab + 1));
      std::string t;
      while (std::getline(list, t, ',')) {
        if (!t.empty()) types.push_back(t);
      }
      try {
        tc.set_types(line.substr(0, tab), types);
      } catch (const std::invalid_argument& e) {
        throw ParseError(line_no, e.what());
      }
    }
    return tc;
  }

  void set_types(const std::string& entity, const std::vector<std::string>& type_names) {
    std::vector<std::size_t> ids;
    for (const auto& n : type_names) {
      auto it = index_.find(n);
      if (it == index_.end()) throw std::invalid_argument("unknown type name: " + n);
      ids.push_back(it->second);
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    entity_types_[entity] = std::move(ids);
  }

  // nullptr when the entity is absent from the catalog.
  const std::vector<std::size_t>* types_of(const std::string& entity) const {
    auto it = entity_types_.find(entity);
    return it == entity_types_.end() ? nullptr : &it->second;
  }

  const std::vector<std::string>& inventory() const { return inventory_; }
  std::size_t entity_count() const { return entity_types_.size(); }

 private:
  std::vector<std::string> inventory_;
  std::unordered_map<std::string, std::size_t> index_;
  std::unordered_map<std::string, std::vector<std::size_t>> entity_types_;
};

struct EncodedSentence {
  std::vector<std::size_t> ids;
  std::size_t head_pos = 0;
  std::size_t tail_pos = 0;
};

// Everything the classifier consumes for one bag.
struct BagInput {
  std::vector<EncodedSentence> sentences;
  std::vector<double> mutual_relation;  // k_e; zero when withheld or missing
  std::vector<std::size_t> head_types;
  std::vector<std::size_t> tail_types;
  std::size_t label = 0;  // training label id
  bool mr_missing = false;
  bool head_types_missing = false;
  bool tail_types_missing = false;
};

struct FeatureCoverage {
  std::size_t bags = 0;
  std::size_t mr_missing = 0;
  std::size_t types_missing = 0;  // entity slots without a catalog entry or with no types
};

inline EncodedSentence encode_sentence(const SentenceInstance& inst, const Vocabulary& vocab) {
  return {vocab.encode(inst.tokens), inst.head_pos, inst.tail_pos};
}

// `vectors` may be null (embeddings withheld): MR is then the zero vector.
inline BagInput make_bag_input(const Bag& bag, const Vocabulary& vocab,
                               const RelationSet& relations, const ModelConfig& config,
                               const EntityVectors* vectors, const TypeCatalog* types,
                               FeatureCoverage* coverage = nullptr) {
  BagInput in;
  for (const auto& inst : bag.instances) in.sentences.push_back(encode_sentence(inst, vocab));
  if (!bag.labels.empty()) {
    auto r = relations.find(*bag.labels.begin());
    in.label = r.value_or(0);
  }
  in.mutual_relation.assign(config.entity_dim, 0.0);
  if (vectors && config.use_mutual_relation) {
    if (vectors->dim() != config.entity_dim) {
      throw ShapeMismatchError("entity vectors have dim " + std::to_string(vectors->dim()) +
                               ", model expects " + std::to_string(config.entity_dim));
    }
    auto mr = mutual_relation(*vectors, bag.head_entity, bag.tail_entity);
    in.mutual_relation = std::move(mr.values);
    in.mr_missing = mr.out_of_graph;
  } else {
    in.mr_missing = true;
  }
  auto lookup = [&](const std::string& e, std::vector<std::size_t>& out) {
    const auto* t = types ? types->types_of(e) : nullptr;
    if (t) out = *t;
    return t == nullptr || t->empty();
  };
  in.head_types_missing = lookup(bag.head_entity, in.head_types);
  in.tail_types_missing = lookup(bag.tail_entity, in.tail_types);
  if (coverage) {
    ++coverage->bags;
    coverage->mr_missing += in.mr_missing ? 1 : 0;
    coverage->types_missing += (in.head_types_missing ? 1 : 0) + (in.tail_types_missing ? 1 : 0);
  }
  return in;
}

namespace param {
inline constexpr const char* kWordEmb = "word_emb";
inline constexpr const char* kPosHead = "pos_head";
inline constexpr const char* kPosTail = "pos_tail";
inline constexpr const char* kConvW = "conv_w";
inline constexpr const char* kConvB = "conv_b";
inline constexpr const char* kTypeEmb = "type_emb";
inline constexpr const char* kAttnDiag = "attn_diag";
inline constexpr const char* kRelQuery = "rel_query";
inline constexpr const char* kReW = "re_w";
inline constexpr const char* kReB = "re_b";
inline constexpr const char* kMrW = "mr_w";
inline constexpr const char* kMrB = "mr_b";
inline constexpr const char* kTypeW = "type_w";
inline constexpr const char* kTypeB = "type_b";
inline constexpr const char* kFusionAlpha = "fusion_alpha";
inline constexpr const char* kFusionBeta = "fusion_beta";
inline constexpr const char* kFusionGamma = "fusion_gamma";
inline constexpr const char* kFusionW = "fusion_w";
inline constexpr const char* kFusionB = "fusion_b";
}  // namespace param

class ModelParams {
 public:
  ModelParams() = default;

  // Allocates every tensor with the documented initialization. Word rows are
  // uniform in [-0.25, 0.25]; weight matrices use Glorot-uniform; A starts
  // at ones; fusion scalars at 1/3, fusion w at ones, biases at zero.
  ModelParams(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config.validate();
    std::mt19937_64 rng(seed);
    auto uniform = [&](std::vector<std::size_t> shape, double limit) {
      Tensor t(std::move(shape), 0.0);
      std::uniform_real_distribution<double> u(-limit, limit);
      for (double& v : t.storage()) v = u(rng);
      return t;
    };
    auto glorot = [&](std::size_t rows, std::size_t cols) {
      return uniform({rows, cols}, std::sqrt(6.0 / static_cast<double>(rows + cols)));
    };
    const std::size_t m = config.num_relations;
    const std::size_t enc = config.encoding_dim();
    store_.add(param::kWordEmb, uniform({config.vocab_size, config.word_dim}, 0.25));
    store_.add(param::kPosHead, uniform({config.position_buckets(), config.pos_dim}, 0.25));
    store_.add(param::kPosTail, uniform({config.position_buckets(), config.pos_dim}, 0.25));
    store_.add(param::kConvW, glorot(config.filters, config.window * config.input_dim()));
    store_.add(param::kConvB, Tensor({config.filters}, 0.0));
    store_.add(param::kTypeEmb, glorot(config.num_types, config.type_dim));
    store_.add(param::kAttnDiag, Tensor({enc}, 1.0));
    store_.add(param::kRelQuery, glorot(m, enc));
    store_.add(param::kReW, glorot(m, enc));
    store_.add(param::kReB, Tensor({m}, 0.0));
    store_.add(param::kMrW, glorot(m, config.entity_dim));
    store_.add(param::kMrB, Tensor({m}, 0.0));
    store_.add(param::kTypeW, glorot(m, 2 * config.type_dim));
    store_.add(param::kTypeB, Tensor({m}, 0.0));
    store_.add(param::kFusionAlpha, Tensor({1}, 1.0 / 3.0));
    store_.add(param::kFusionBeta, Tensor({1}, 1.0 / 3.0));
    store_.add(param::kFusionGamma, Tensor({1}, 1.0 / 3.0));
    store_.add(param::kFusionW, Tensor({m}, 1.0));
    store_.add(param::kFusionB, Tensor({m}, 0.0));
    if (!config.use_mutual_relation) disable_mutual_relation();
  }

  // Ablation: alpha pinned at zero and excluded from updates.
  void disable_mutual_relation() {
    config_.use_mutual_relation = false;
    store_.value(param::kFusionAlpha)[0] = 0.0;
    store_.set_trainable(param::kFusionAlpha, false);
  }

  const ModelConfig& config() const { return config_; }
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }

  const Tensor& operator[](const char* name) const { return store_.value(name); }
  Tensor& operator[](const char* name) { return store_.value(name); }
  Tensor& grad(const char* name) { return store_.grad(name); }

  double scalar(const char* name) const { return store_.value(name)[0]; }

  // Wraps an existing store (checkpoint load); shapes are validated.
  static ModelParams from_store(const ModelConfig& config, ParamStore store);

 private:
  ModelConfig config_;
  ParamStore store_;
};

inline ModelParams ModelParams::from_store(const ModelConfig& config, ParamStore store) {
  ModelParams reference(config, 0);
  for (const auto& [name, e] : reference.store().entries()) {
    if (!store.contains(name)) throw ShapeMismatchError("missing tensor " + name);
    if (store.value(name).shape() != e.value.shape()) {
      throw ShapeMismatchError("tensor " + name + " has unexpected shape");
    }
  }
  if (store.entries().size() != reference.store().entries().size()) {
    throw ShapeMismatchError("unexpected extra tensors in parameter store");
  }
  ModelParams p;
  p.config_ = config;
  p.store_ = std::move(store);
  if (!config.use_mutual_relation) p.store_.set_trainable(param::kFusionAlpha, false);
  return p;
}

// Optional hook: overwrite word rows from "token v1 ... v_kw" lines.
// Returns the number of rows replaced.
inline std::size_t load_pretrained_words(ModelParams& params, const Vocabulary& vocab,
                                         std::istream& in) {
  Tensor& words = params[param::kWordEmb];
  const std::size_t kw = words.dim(1);
  std::size_t replaced = 0;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    std::vector<double> v;
    double x = 0.0;
    while (fields >> x) v.push_back(x);
    if (v.size() != kw) continue;
    const std::size_t id = vocab.id(token);
    if (id == Vocabulary::kUnk && token != Vocabulary::kUnkToken) continue;
    std::copy(v.begin(), v.end(), words.row(id).begin());
    ++replaced;
  }
  return replaced;
}

// ---------------------------------------------------------------------------
// Forward pieces.

inline std::size_t relative_position_bucket(std::size_t index, std::size_t entity_pos,
                                            std::size_t max_length = kMaxSentenceLength) {
  const auto offset = static_cast<std::int64_t>(index) - static_cast<std::int64_t>(entity_pos);
  const auto l = static_cast<std::int64_t>(max_length);
  return static_cast<std::size_t>(std::clamp(offset, -l, l) + l);
}

namespace detail {

// Writes sentence rows into `out` starting at row `first_row`.
inline void write_sentence_rows(const EncodedSentence& s, const ModelParams& params,
                                std::span<double> out, std::size_t first_row) {
  const ModelConfig& c = params.config();
  const std::size_t d = c.input_dim();
  const Tensor& words = params[param::kWordEmb];
  const Tensor& ph = params[param::kPosHead];
  const Tensor& pt = params[param::kPosTail];
  for (std::size_t t = 0; t < s.ids.size(); ++t) {
    double* row = out.data() + (first_row + t) * d;
    const auto w = words.row(s.ids[t]);
    const auto h = ph.row(relative_position_bucket(t, s.head_pos, c.max_length));
    const auto tl = pt.row(relative_position_bucket(t, s.tail_pos, c.max_length));
    std::copy(w.begin(), w.end(), row);
    std::copy(h.begin(), h.end(), row + c.word_dim);
    std::copy(tl.begin(), tl.end(), row + c.word_dim + c.pos_dim);
  }
}

inline void check_sentence(const EncodedSentence& s, const ModelConfig& c) {
  if (s.ids.empty() || s.head_pos >= s.ids.size() || s.tail_pos >= s.ids.size()) {
    throw std::invalid_argument("sentence: entity position out of range");
  }
  for (std::size_t id : s.ids) {
    if (id >= c.vocab_size) throw std::invalid_argument("sentence: token id out of vocabulary");
  }
}

}  // namespace detail

// length x (k_w + 2 k_p) matrix of concatenated word and position rows.
inline Tensor embed_sentence(const EncodedSentence& s, const ModelParams& params) {
  detail::check_sentence(s, params.config());
  Tensor m({s.ids.size(), params.config().input_dim()}, 0.0);
  detail::write_sentence_rows(s, params, m.values(), 0);
  return m;
}

// Cached state of one PCNN forward pass.
struct PcnnCache {
  std::size_t length = 0;
  std::vector<double> padded;           // (length + window - 1) x input_dim
  std::vector<std::ptrdiff_t> argmax;   // per (segment, filter); -1 for an empty segment
  std::vector<double> encoding;         // 3k, after tanh
};

namespace detail {

// `cache.padded` must already hold the zero-padded sentence matrix.
inline void pcnn_pool(std::size_t head_pos, std::size_t tail_pos, const ModelParams& params,
                      PcnnCache& cache) {
  const ModelConfig& c = params.config();
  const std::size_t d = c.input_dim();
  const std::size_t k = c.filters;
  const std::size_t span_len = c.window * d;
  const Tensor& w = params[param::kConvW];
  const Tensor& b = params[param::kConvB];
  const std::size_t p1 = std::min(head_pos, tail_pos);
  const std::size_t p2 = std::max(head_pos, tail_pos);
  cache.argmax.assign(3 * k, -1);
  std::vector<double> pooled(3 * k, 0.0);
  for (std::size_t f = 0; f < k; ++f) {
    const double* wf = w.row(f).data();
    for (std::size_t t = 0; t < cache.length; ++t) {
      const double* x = cache.padded.data() + t * d;
      double v = b[f];
      for (std::size_t i = 0; i < span_len; ++i) v += wf[i] * x[i];
      const std::size_t seg = t <= p1 ? 0 : (t <= p2 ? 1 : 2);
      const std::size_t slot = seg * k + f;
      if (cache.argmax[slot] < 0 || v > pooled[slot]) {
        pooled[slot] = v;
        cache.argmax[slot] = static_cast<std::ptrdiff_t>(t);
      }
    }
  }
  cache.encoding.resize(3 * k);
  for (std::size_t i = 0; i < 3 * k; ++i) cache.encoding[i] = std::tanh(pooled[i]);
}

inline void pcnn_forward(const EncodedSentence& s, const ModelParams& params, PcnnCache& cache) {
  const ModelConfig& c = params.config();
  detail::check_sentence(s, c);
  cache.length = s.ids.size();
  cache.padded.assign((cache.length + c.window - 1) * c.input_dim(), 0.0);
  write_sentence_rows(s, params, cache.padded, c.padding());
  pcnn_pool(s.head_pos, s.tail_pos, params, cache);
}

}  // namespace detail

// Window convolution with zero padding, piecewise max pooling over
// [0, p1], [p1+1, p2], [p2+1, end] (empty segment -> 0), then tanh.
// Output layout: segment-major, 3 x k.
inline std::vector<double> pcnn_encode(const Tensor& matrix, std::size_t head_pos,
                                       std::size_t tail_pos, const ModelParams& params) {
  const ModelConfig& c = params.config();
  if (matrix.rank() != 2 || matrix.dim(1) != c.input_dim()) {
    throw std::invalid_argument("pcnn_encode: matrix width must equal input_dim");
  }
  const std::size_t n = matrix.dim(0);
  if (head_pos >= n || tail_pos >= n) {
    throw std::invalid_argument("pcnn_encode: entity position out of range");
  }
  PcnnCache cache;
  cache.length = n;
  cache.padded.assign((n + c.window - 1) * c.input_dim(), 0.0);
  std::copy(matrix.storage().begin(), matrix.storage().end(),
            cache.padded.begin() + static_cast<std::ptrdiff_t>(c.padding() * c.input_dim()));
  detail::pcnn_pool(head_pos, tail_pos, params, cache);
  return cache.encoding;
}

// q_j = sum_d x_j[d] A[d] r[d]
inline std::vector<double> attention_scores(std::span<const std::vector<double>> encodings,
                                            std::span<const double> query,
                                            std::span<const double> diag) {
  std::vector<double> q(encodings.size(), 0.0);
  for (std::size_t j = 0; j < encodings.size(); ++j) {
    const auto& x = encodings[j];
    if (x.size() != diag.size() || query.size() != diag.size()) {
      throw std::invalid_argument("attention: dimension mismatch");
    }
    for (std::size_t d = 0; d < x.size(); ++d) q[j] += x[d] * diag[d] * query[d];
  }
  return q;
}

inline std::vector<double> attention_alpha(std::span<const std::vector<double>> encodings,
                                           std::span<const double> query,
                                           std::span<const double> diag) {
  if (encodings.empty()) throw std::invalid_argument("attention_alpha: empty bag");
  return softmax(attention_scores(encodings, query, diag));
}

inline std::vector<double> bag_repr(std::span<const std::vector<double>> encodings,
                                    std::span<const double> alpha) {
  if (encodings.empty() || encodings.size() != alpha.size()) {
    throw std::invalid_argument("bag_repr: weights do not match encodings");
  }
  std::vector<double> x(encodings[0].size(), 0.0);
  for (std::size_t j = 0; j < encodings.size(); ++j) axpy(alpha[j], encodings[j], x);
  return x;
}

// [mean of head type rows | mean of tail type rows]; an empty set gives zeros.
inline std::vector<double> type_feature(std::span<const std::size_t> head_types,
                                        std::span<const std::size_t> tail_types,
                                        const Tensor& type_emb) {
  const std::size_t kt = type_emb.dim(1);
  std::vector<double> out(2 * kt, 0.0);
  auto mean_into = [&](std::span<const std::size_t> types, std::span<double> dst) {
    if (types.empty()) return;
    const double inv = 1.0 / static_cast<double>(types.size());
    for (std::size_t t : types) {
      if (t >= type_emb.dim(0)) throw std::invalid_argument("type_feature: type id out of range");
      axpy(inv, type_emb.row(t), dst);
    }
  };
  mean_into(head_types, std::span<double>(out).subspan(0, kt));
  mean_into(tail_types, std::span<double>(out).subspan(kt, kt));
  return out;
}

struct HeadOutputs {
  std::vector<double> re;
  std::vector<double> c_mr;
  std::vector<double> c_t;
};

inline std::vector<double> text_head(std::span<const double> bag_vector, const ModelParams& p) {
  return softmax(affine(p[param::kReW], bag_vector, p[param::kReB].values()));
}

inline HeadOutputs heads(std::span<const double> bag_vector, std::span<const double> mr,
                         std::span<const double> types, const ModelParams& p) {
  HeadOutputs h;
  h.re = text_head(bag_vector, p);
  h.c_mr = softmax(affine(p[param::kMrW], mr, p[param::kMrB].values()));
  h.c_t = softmax(affine(p[param::kTypeW], types, p[param::kTypeB].values()));
  return h;
}

// s = alpha C_MR + beta C_T + gamma RE
inline std::vector<double> fusion_input(const HeadOutputs& h, const ModelParams& p) {
  const double a = p.scalar(param::kFusionAlpha);
  const double b = p.scalar(param::kFusionBeta);
  const double g = p.scalar(param::kFusionGamma);
  if (h.c_mr.size() != h.re.size() || h.c_t.size() != h.re.size()) {
    throw std::invalid_argument("fuse: head lengths differ");
  }
  std::vector<double> s(h.re.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = a * h.c_mr[i] + b * h.c_t[i] + g * h.re[i];
  return s;
}

// P = softmax(w * s + b), w and b per relation.
inline std::vector<double> fuse(const HeadOutputs& h, const ModelParams& p) {
  const auto s = fusion_input(h, p);
  const Tensor& w = p[param::kFusionW];
  const Tensor& b = p[param::kFusionB];
  if (w.size() != s.size()) throw std::invalid_argument("fuse: relation count mismatch");
  std::vector<double> z(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) z[i] = w[i] * s[i] + b[i];
  return softmax(z);
}

// ---------------------------------------------------------------------------
// Bag forward / loss / backward.

struct BagForwardTrace {
  // Shared by both modes.
  std::vector<PcnnCache> sentences;
  std::vector<std::vector<double>> encodings;
  std::vector<double> type_vector;
  HeadOutputs heads;  // training: RE under the gold query
  // Training mode.
  std::size_t query_relation = 0;
  std::vector<double> alpha;
  std::vector<double> bag_vector;       // before dropout
  std::vector<double> dropout_scale;    // 0 or 1/(1-p) per unit; empty when off
  std::vector<double> bag_vector_used;  // after dropout, input to the RE head
  std::vector<double> fusion_s;
  std::vector<double> fused;
  // Inference mode: one entry per relation query.
  std::vector<std::vector<double>> relation_alpha;
  std::vector<std::vector<double>> relation_fused;
  std::vector<double> confidence;
};

enum class ForwardMode { kTrain, kInference };

namespace detail {

inline void encode_bag(const BagInput& bag, const ModelParams& params, BagForwardTrace& trace) {
  if (bag.sentences.empty()) throw std::invalid_argument("forward_bag: empty bag");
  const ModelConfig& c = params.config();
  if (bag.mutual_relation.size() != c.entity_dim) {
    throw std::invalid_argument("forward_bag: MR has wrong dimension");
  }
  trace.sentences.resize(bag.sentences.size());
  trace.encodings.resize(bag.sentences.size());
  for (std::size_t j = 0; j < bag.sentences.size(); ++j) {
    pcnn_forward(bag.sentences[j], params, trace.sentences[j]);
    trace.encodings[j] = trace.sentences[j].encoding;
  }
  trace.type_vector = type_feature(bag.head_types, bag.tail_types, params[param::kTypeEmb]);
}

}  // namespace detail

// Training mode: attention with the gold query, dropout on X_bag when `rng`
// is given and the configured rate is positive.
inline BagForwardTrace forward_bag_train(const BagInput& bag, const ModelParams& params,
                                         std::mt19937_64* rng) {
  const ModelConfig& c = params.config();
  if (bag.label >= c.num_relations) throw std::invalid_argument("forward_bag: unknown label");
  BagForwardTrace tr;
  detail::encode_bag(bag, params, tr);
  tr.query_relation = bag.label;
  tr.alpha = attention_alpha(tr.encodings, params[param::kRelQuery].row(bag.label),
                             params[param::kAttnDiag].values());
  tr.bag_vector = bag_repr(tr.encodings, tr.alpha);
  tr.bag_vector_used = tr.bag_vector;
  if (rng && c.dropout > 0.0) {
    std::bernoulli_distribution keep(1.0 - c.dropout);
    const double inv = 1.0 / (1.0 - c.dropout);
    tr.dropout_scale.resize(tr.bag_vector.size());
    for (std::size_t i = 0; i < tr.bag_vector.size(); ++i) {
      tr.dropout_scale[i] = keep(*rng) ? inv : 0.0;
      tr.bag_vector_used[i] *= tr.dropout_scale[i];
    }
  }
  tr.heads = heads(tr.bag_vector_used, bag.mutual_relation, tr.type_vector, params);
  tr.fusion_s = fusion_input(tr.heads, params);
  tr.fused = fuse(tr.heads, params);
  return tr;
}

// Inference mode: for every relation r, attend with query r and run the full
// head/fusion stack; confidence[r] = P_r(r). In uniform mode the attention
// weights are 1/n and a single P is shared.
inline BagForwardTrace forward_bag_inference(const BagInput& bag, const ModelParams& params) {
  const ModelConfig& c = params.config();
  BagForwardTrace tr;
  detail::encode_bag(bag, params, tr);
  const auto& mr_w = params[param::kMrW];
  const auto c_mr = softmax(affine(mr_w, bag.mutual_relation, params[param::kMrB].values()));
  const auto c_t =
      softmax(affine(params[param::kTypeW], tr.type_vector, params[param::kTypeB].values()));
  const std::size_t m = c.num_relations;
  tr.confidence.assign(m, 0.0);
  if (c.inference_attention == InferenceAttention::kUniform) {
    const std::vector<double> alpha(tr.encodings.size(),
                                    1.0 / static_cast<double>(tr.encodings.size()));
    HeadOutputs h{text_head(bag_repr(tr.encodings, alpha), params), c_mr, c_t};
    auto p = fuse(h, params);
    tr.relation_alpha.assign(m, alpha);
    tr.relation_fused.assign(m, p);
    tr.confidence = p;
    tr.heads = std::move(h);
    return tr;
  }
  for (std::size_t r = 0; r < m; ++r) {
    auto alpha = attention_alpha(tr.encodings, params[param::kRelQuery].row(r),
                                 params[param::kAttnDiag].values());
    HeadOutputs h{text_head(bag_repr(tr.encodings, alpha), params), c_mr, c_t};
    auto p = fuse(h, params);
    tr.confidence[r] = p[r];
    tr.relation_alpha.push_back(std::move(alpha));
    tr.relation_fused.push_back(std::move(p));
  }
  return tr;
}

// Scoring without sentences: X_bag is the zero vector, so only the biases of
// the text head contribute. Returns one probability per relation.
inline std::vector<double> forward_features_only(const BagInput& bag, const ModelParams& params) {
  const ModelConfig& c = params.config();
  if (bag.mutual_relation.size() != c.entity_dim) {
    throw std::invalid_argument("forward_features_only: MR has wrong dimension");
  }
  const std::vector<double> zero(c.encoding_dim(), 0.0);
  const auto types = type_feature(bag.head_types, bag.tail_types, params[param::kTypeEmb]);
  return fuse(heads(zero, bag.mutual_relation, types, params), params);
}

inline BagForwardTrace forward_bag(const BagInput& bag, const ModelParams& params,
                                   ForwardMode mode, std::mt19937_64* rng = nullptr) {
  return mode == ForwardMode::kTrain ? forward_bag_train(bag, params, rng)
                                     : forward_bag_inference(bag, params);
}

inline constexpr double kProbabilityFloor = 1e-12;

// -log P[gold], P floored at 1e-12.
inline double bag_loss(const BagForwardTrace& trace, std::size_t gold) {
  if (gold >= trace.fused.size()) throw std::invalid_argument("bag_loss: unknown label");
  return -std::log(std::max(trace.fused[gold], kProbabilityFloor));
}

// Accumulates scale * d(bag_loss)/d(params) into the parameter gradients.
inline void backward(const BagForwardTrace& tr, const BagInput& bag, ModelParams& params,
                     double scale = 1.0) {
  const ModelConfig& c = params.config();
  const std::size_t m = c.num_relations;
  const std::size_t gold = tr.query_relation;
  const auto& P = tr.fused;
  if (P[gold] < kProbabilityFloor) return;  // floor active: loss is locally constant

  // z = w*s + b, P = softmax(z), L = -log P[gold]
  std::vector<double> dz(m);
  for (std::size_t i = 0; i < m; ++i) dz[i] = scale * (P[i] - (i == gold ? 1.0 : 0.0));
  const Tensor& fw = params[param::kFusionW];
  std::vector<double> ds(m);
  for (std::size_t i = 0; i < m; ++i) {
    params.grad(param::kFusionW)[i] += dz[i] * tr.fusion_s[i];
    params.grad(param::kFusionB)[i] += dz[i];
    ds[i] = dz[i] * fw[i];
  }
  const double a = params.scalar(param::kFusionAlpha);
  const double b = params.scalar(param::kFusionBeta);
  const double g = params.scalar(param::kFusionGamma);
  params.grad(param::kFusionAlpha)[0] += dot(ds, tr.heads.c_mr);
  params.grad(param::kFusionBeta)[0] += dot(ds, tr.heads.c_t);
  params.grad(param::kFusionGamma)[0] += dot(ds, tr.heads.re);

  auto head_backward = [&](const std::vector<double>& prob, double weight,
                           std::span<const double> input, const char* w_name,
                           const char* b_name) {
    std::vector<double> dp(m);
    for (std::size_t i = 0; i < m; ++i) dp[i] = weight * ds[i];
    const auto du = softmax_backward(prob, dp);
    Tensor& gw = params.grad(w_name);
    Tensor& gb = params.grad(b_name);
    for (std::size_t i = 0; i < m; ++i) {
      gb[i] += du[i];
      axpy(du[i], input, gw.row(i));
    }
    return du;
  };

  head_backward(tr.heads.c_mr, a, bag.mutual_relation, param::kMrW, param::kMrB);

  const auto du_t = head_backward(tr.heads.c_t, b, tr.type_vector, param::kTypeW, param::kTypeB);
  {
    const Tensor& tw = params[param::kTypeW];
    const std::size_t kt = c.type_dim;
    std::vector<double> dtype(2 * kt, 0.0);
    for (std::size_t i = 0; i < m; ++i) axpy(du_t[i], tw.row(i), dtype);
    Tensor& gte = params.grad(param::kTypeEmb);
    auto spread = [&](std::span<const std::size_t> types, std::size_t offset) {
      if (types.empty()) return;
      const double inv = 1.0 / static_cast<double>(types.size());
      for (std::size_t t : types) {
        axpy(inv, std::span<const double>(dtype).subspan(offset, kt), gte.row(t));
      }
    };
    spread(bag.head_types, 0);
    spread(bag.tail_types, kt);
  }

  const auto du_re =
      head_backward(tr.heads.re, g, tr.bag_vector_used, param::kReW, param::kReB);
  const std::size_t enc = c.encoding_dim();
  std::vector<double> dx_bag(enc, 0.0);
  {
    const Tensor& rw = params[param::kReW];
    for (std::size_t i = 0; i < m; ++i) axpy(du_re[i], rw.row(i), dx_bag);
    if (!tr.dropout_scale.empty()) {
      for (std::size_t d = 0; d < enc; ++d) dx_bag[d] *= tr.dropout_scale[d];
    }
  }

  // Attention: X = sum_j alpha_j x_j, alpha = softmax(q), q_j = x_j . (A * r)
  const std::size_t n = tr.encodings.size();
  std::vector<std::vector<double>> dx(n, std::vector<double>(enc, 0.0));
  std::vector<double> dalpha(n);
  for (std::size_t j = 0; j < n; ++j) {
    dalpha[j] = dot(dx_bag, tr.encodings[j]);
    axpy(tr.alpha[j], dx_bag, dx[j]);
  }
  const auto dq = softmax_backward(tr.alpha, dalpha);
  {
    const auto A = params[param::kAttnDiag].values();
    const auto r = params[param::kRelQuery].row(gold);
    auto gA = params.grad(param::kAttnDiag).values();
    auto gr = params.grad(param::kRelQuery).row(gold);
    for (std::size_t j = 0; j < n; ++j) {
      const auto& x = tr.encodings[j];
      for (std::size_t d = 0; d < enc; ++d) {
        dx[j][d] += dq[j] * A[d] * r[d];
        gA[d] += dq[j] * x[d] * r[d];
        gr[d] += dq[j] * x[d] * A[d];
      }
    }
  }

  // PCNN: tanh, piecewise max, convolution, embedding lookups.
  const std::size_t k = c.filters;
  const std::size_t din = c.input_dim();
  const std::size_t span_len = c.window * din;
  const Tensor& cw = params[param::kConvW];
  Tensor& gcw = params.grad(param::kConvW);
  Tensor& gcb = params.grad(param::kConvB);
  Tensor& gword = params.grad(param::kWordEmb);
  Tensor& gph = params.grad(param::kPosHead);
  Tensor& gpt = params.grad(param::kPosTail);
  for (std::size_t j = 0; j < n; ++j) {
    const PcnnCache& cache = tr.sentences[j];
    std::vector<double> dpadded(cache.padded.size(), 0.0);
    for (std::size_t slot = 0; slot < 3 * k; ++slot) {
      const std::ptrdiff_t t = cache.argmax[slot];
      if (t < 0) continue;
      const double e = cache.encoding[slot];
      const double dc = dx[j][slot] * (1.0 - e * e);
      if (dc == 0.0) continue;
      const std::size_t f = slot % k;
      gcb[f] += dc;
      const auto off = static_cast<std::size_t>(t) * din;
      axpy(dc, std::span<const double>(cache.padded).subspan(off, span_len), gcw.row(f));
      axpy(dc, cw.row(f), std::span<double>(dpadded).subspan(off, span_len));
    }
    const EncodedSentence& s = bag.sentences[j];
    const std::size_t pad = c.padding();
    for (std::size_t t = 0; t < s.ids.size(); ++t) {
      const std::span<const double> row(dpadded.data() + (t + pad) * din, din);
      axpy(1.0, row.subspan(0, c.word_dim), gword.row(s.ids[t]));
      axpy(1.0, row.subspan(c.word_dim, c.pos_dim),
           gph.row(relative_position_bucket(t, s.head_pos, c.max_length)));
      axpy(1.0, row.subspan(c.word_dim + c.pos_dim, c.pos_dim),
           gpt.row(relative_position_bucket(t, s.tail_pos, c.max_length)));
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoint: "#remodel v1" followed by named sections. Doubles are written
// in shortest round-trip form, so reload is bit-exact.

inline constexpr const char* kCheckpointHeader = "#remodel v1";

struct Checkpoint {
  ModelParams params;
  RelationSet relations;
  Vocabulary vocab;
  std::vector<std::string> type_inventory;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("bad number: " + std::string(s));
  }
  return v;
}

inline const char* attention_name(InferenceAttention a) {
  return a == InferenceAttention::kUniform ? "uniform" : "per_relation";
}

}  // namespace detail

inline void write_checkpoint(const Checkpoint& ck, std::ostream& out) {
  const ModelConfig& c = ck.params.config();
  out << kCheckpointHeader << '\n';
  out << "[config]\n";
  out << "vocab_size=" << c.vocab_size << '\n'
      << "word_dim=" << c.word_dim << '\n'
      << "pos_dim=" << c.pos_dim << '\n'
      << "max_length=" << c.max_length << '\n'
      << "filters=" << c.filters << '\n'
      << "window=" << c.window << '\n'
      << "type_dim=" << c.type_dim << '\n'
      << "num_types=" << c.num_types << '\n'
      << "entity_dim=" << c.entity_dim << '\n'
      << "num_relations=" << c.num_relations << '\n'
      << "dropout=" << detail::format_double(c.dropout) << '\n'
      << "inference_attention=" << detail::attention_name(c.inference_attention) << '\n'
      << "use_mutual_relation=" << (c.use_mutual_relation ? 1 : 0) << '\n'
      << "vocab_min_count=" << ck.vocab.min_count() << '\n';
  out << "[relations " << ck.relations.size() << "]\n";
  for (const auto& r : ck.relations.names()) out << nlohmann::json(r).dump() << '\n';
  out << "[vocab " << ck.vocab.size() << "]\n";
  for (const auto& t : ck.vocab.tokens()) out << nlohmann::json(t).dump() << '\n';
  out << "[types " << ck.type_inventory.size() << "]\n";
  for (const auto& t : ck.type_inventory) out << nlohmann::json(t).dump() << '\n';
  for (const auto& [name, e] : ck.params.store().entries()) {
    out << "[tensor " << name;
    for (std::size_t d : e.value.shape()) out << ' ' << d;
    out << "]\n";
    const auto v = e.value.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out << ' ';
      out << detail::format_double(v[i]);
    }
    out << '\n';
  }
  out << "[end]\n";
}

inline Checkpoint read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointHeader) {
    throw ArtifactVersionError("checkpoint: expected header '" + std::string(kCheckpointHeader) +
                               "'");
  }
  std::size_t line_no = 1;
  auto next = [&](std::string& dst) {
    if (!std::getline(in, dst)) throw ParseError(line_no, "checkpoint: unexpected end of file");
    ++line_no;
  };
  auto section_count = [&](const std::string& header, const std::string& tag) {
    const std::string prefix = "[" + tag + " ";
    if (header.rfind(prefix, 0) != 0 || header.back() != ']') {
      throw ParseError(line_no, "checkpoint: expected section " + tag);
    }
    return static_cast<std::size_t>(
        std::stoull(header.substr(prefix.size(), header.size() - prefix.size() - 1)));
  };
  // `header` is read from the stream when empty.
  auto read_strings = [&](const std::string& tag, std::string header) {
    if (header.empty()) next(header);
    const std::size_t n = section_count(header, tag);
    std::vector<std::string> items;
    for (std::size_t i = 0; i < n; ++i) {
      std::string s;
      next(s);
      try {
        items.push_back(nlohmann::json::parse(s).get<std::string>());
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(line_no, e.what());
      }
    }
    return items;
  };

  next(line);
  if (line != "[config]") throw ParseError(line_no, "checkpoint: expected [config]");
  std::map<std::string, std::string> kv;
  std::string first_section;
  while (true) {
    next(line);
    if (!line.empty() && line[0] == '[') {
      first_section = line;
      break;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(line_no, "checkpoint: bad config line");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  ModelConfig c;
  std::size_t min_count = 1;
  try {
    auto num = [&](const char* key) { return static_cast<std::size_t>(std::stoull(kv.at(key))); };
    c.vocab_size = num("vocab_size");
    c.word_dim = num("word_dim");
    c.pos_dim = num("pos_dim");
    c.max_length = num("max_length");
    c.filters = num("filters");
    c.window = num("window");
    c.type_dim = num("type_dim");
    c.num_types = num("num_types");
    c.entity_dim = num("entity_dim");
    c.num_relations = num("num_relations");
    c.dropout = detail::parse_double(kv.at("dropout"));
    c.inference_attention = kv.at("inference_attention") == "uniform"
                                ? InferenceAttention::kUniform
                                : InferenceAttention::kPerRelation;
    c.use_mutual_relation = kv.at("use_mutual_relation") == "1";
    min_count = num("vocab_min_count");
  } catch (const std::exception& e) {
    throw ParseError(line_no, std::string("checkpoint: bad config: ") + e.what());
  }

  const auto relations = read_strings("relations", first_section);
  const auto vocab_tokens = read_strings("vocab", {});
  const auto types = read_strings("types", {});
  if (relations.size() != c.num_relations || vocab_tokens.size() != c.vocab_size) {
    throw ShapeMismatchError("checkpoint: label or vocabulary size disagrees with config");
  }

  ParamStore store;
  while (true) {
    next(line);
    if (line == "[end]") break;
    if (line.rfind("[tensor ", 0) != 0 || line.back() != ']') {
      throw ParseError(line_no, "checkpoint: expected tensor section");
    }
    std::istringstream hdr(line.substr(8, line.size() - 9));
    std::string name;
    hdr >> name;
    std::vector<std::size_t> shape;
    std::size_t d = 0;
    while (hdr >> d) shape.push_back(d);
    std::string body;
    next(body);
    std::vector<double> values;
    std::size_t start = 0;
    while (start < body.size()) {
      auto end = body.find(' ', start);
      if (end == std::string::npos) end = body.size();
      try {
        values.push_back(detail::parse_double(std::string_view(body).substr(start, end - start)));
      } catch (const std::invalid_argument& e) {
        throw ParseError(line_no, e.what());
      }
      start = end + 1;
    }
    try {
      store.add(name, Tensor(shape, std::move(values)));
    } catch (const std::invalid_argument& e) {
      throw ShapeMismatchError(std::string("checkpoint: ") + e.what());
    }
  }
  Checkpoint ck{ModelParams::from_store(c, std::move(store)), RelationSet::from_names(relations),
                Vocabulary::from_tokens(vocab_tokens, min_count), types};
  return ck;
}

}  // namespace imrel
