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

// imrel: batch relation-extraction pipeline.
//
//   imrel [--config F] [--seed N] [--workers N] [--out DIR] [--set k=v]... <stage>
//
// Stages: cooc, graph, embed, train, eval, predict. Each stage writes its
// artifact plus "<stage>.manifest.json" into the output directory.
//
// Exit codes: 0 ok, 1 other error, 2 missing input, 3 artifact version,
// 4 shape/config mismatch.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "imrel/config.hpp"
#include "imrel/corpus.hpp"
#include "imrel/dataset.hpp"
#include "imrel/embedding.hpp"
#include "imrel/errors.hpp"
#include "imrel/model.hpp"
#include "imrel/proximity.hpp"
#include "imrel/traineval.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace imrel {
namespace {

class MissingInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot read " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char h[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(h, sizeof(h), "%02x", md[i]);
    hex += h;
  }
  return hex;
}

const std::string& require(const std::string& path, const std::string& what) {
  if (path.empty()) throw MissingInputError(what + " is not set");
  if (!fs::is_regular_file(path)) throw MissingInputError(what + " not found: " + path);
  return path;
}

std::ifstream open_in(const std::string& path, const std::string& what) {
  std::ifstream in(require(path, what), std::ios::binary);
  if (!in) throw MissingInputError("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

class Stage {
 public:
  Stage(std::string name, const PipelineConfig& config) : name_(std::move(name)), config_(config) {
    fs::create_directories(config.paths.out);
  }

  std::string out_path(const std::string& file) const {
    return (fs::path(config_.paths.out) / file).string();
  }

  void input(const std::string& path) { inputs_.push_back(path); }
  void output(const std::string& path) { outputs_.push_back(path); }
  json& extra() { return extra_; }

  void write_manifest(const json& seed) const {
    json m;
    m["stage"] = name_;
    m["config"] = config_.echo();
    m["seed"] = seed;
    json in = json::object(), out = json::object();
    for (const auto& p : inputs_) in[p] = sha256_file(p);
    for (const auto& p : outputs_) out[p] = sha256_file(p);
    m["inputs"] = in;
    m["outputs"] = out;
    if (!extra_.is_null()) m["stats"] = extra_;
    auto f = open_out(out_path(name_ + ".manifest.json"));
    f << m.dump(2) << '\n';
  }

 private:
  std::string name_;
  const PipelineConfig& config_;
  std::vector<std::string> inputs_;
  std::vector<std::string> outputs_;
  json extra_;
};

std::vector<std::string> read_lines(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(std::move(line));
  return lines;
}

std::vector<SentenceInstance> load_instances(const std::string& path, const std::string& what,
                                             std::size_t max_length, Stage& stage) {
  auto in = open_in(path, what);
  stage.input(path);
  ParseStats stats;
  auto out = parse_instances(in, &stats, max_length);
  if (stats.dropped_truncated || stats.rejected) {
    std::cerr << "warning: " << path << ": " << stats.dropped_truncated
              << " instance(s) dropped by truncation, " << stats.rejected << " rejected\n";
  }
  return out;
}

std::optional<TypeCatalog> load_types(const PipelineConfig& c, Stage& stage) {
  if (c.paths.types.empty()) return std::nullopt;
  auto inv = open_in(c.paths.type_inventory, "paths.type_inventory");
  auto cat = open_in(c.paths.types, "paths.types");
  stage.input(c.paths.type_inventory);
  stage.input(c.paths.types);
  return TypeCatalog::load(inv, cat, c.model.num_types);
}

std::optional<EntityVectors> load_vectors(const PipelineConfig& c, Stage& stage) {
  if (!c.model.use_mutual_relation) return std::nullopt;
  const std::string path = stage.out_path("entity_embeddings.txt");
  auto in = open_in(path, "entity embeddings");
  stage.input(path);
  auto ev = read_entity_vectors(in);
  if (ev.dim() != c.model.entity_dim) {
    throw ShapeMismatchError("entity embeddings have dim " + std::to_string(ev.dim()) +
                             ", config model.entity_dim is " + std::to_string(c.model.entity_dim));
  }
  return ev;
}

std::string checkpoint_name(std::uint64_t seed) {
  return "model_seed" + std::to_string(seed) + ".ckpt";
}

// The checkpoint's architecture must agree with the configured one.
void check_checkpoint(const Checkpoint& ck, const PipelineConfig& c) {
  const ModelConfig& a = ck.params.config();
  const ModelConfig& b = c.model;
  auto same = [](std::size_t x, std::size_t y, const char* key) {
    if (x != y) {
      throw ShapeMismatchError(std::string("checkpoint ") + key + "=" + std::to_string(x) +
                               " but config has " + std::to_string(y));
    }
  };
  same(a.word_dim, b.word_dim, "model.word_dim");
  same(a.pos_dim, b.pos_dim, "model.pos_dim");
  same(a.max_length, b.max_length, "model.max_length");
  same(a.filters, b.filters, "model.filters");
  same(a.window, b.window, "model.window");
  same(a.type_dim, b.type_dim, "model.type_dim");
  same(a.num_types, b.num_types, "model.num_types");
  same(a.entity_dim, b.entity_dim, "model.entity_dim");
  same(a.use_mutual_relation, b.use_mutual_relation, "model.use_mutual_relation");
}

Checkpoint load_checkpoint(const std::string& path, const PipelineConfig& c, Stage& stage) {
  auto in = open_in(path, "checkpoint");
  stage.input(path);
  Checkpoint ck = read_checkpoint(in);
  check_checkpoint(ck, c);
  return ck;
}

json coverage_json(const FeatureCoverage& cov) {
  return {{"bags", cov.bags}, {"mr_missing", cov.mr_missing}, {"types_missing", cov.types_missing}};
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// ---------------------------------------------------------------------------

void cmd_cooc(const PipelineConfig& c) {
  Stage stage("cooc", c);
  auto in = open_in(c.paths.unlabeled, "paths.unlabeled");
  stage.input(c.paths.unlabeled);
  const auto lines = read_lines(in);
  CooccurrenceStats stats;
  const auto table = count_cooccurrences_sharded(lines, c.embedding.workers, &stats);
  const std::string out = stage.out_path("cooc.tsv");
  {
    auto f = open_out(out);
    write_cooccurrence_tsv(table, f);
  }
  stage.output(out);
  if (stats.sentences == 0) std::cerr << "warning: no sentences in " << c.paths.unlabeled << '\n';
  if (stats.skipped) std::cerr << "warning: skipped " << stats.skipped << " unparseable line(s)\n";
  std::cout << "sentences " << stats.sentences << "\npairs " << table.size() << "\nmax_count "
            << table.max_count() << '\n';
  stage.extra() = {{"sentences", stats.sentences},
                   {"skipped", stats.skipped},
                   {"pairs", table.size()},
                   {"max_count", table.max_count()}};
  stage.write_manifest(nullptr);
}

void cmd_graph(const PipelineConfig& c) {
  Stage stage("graph", c);
  const std::string src = stage.out_path("cooc.tsv");
  auto in = open_in(src, "co-occurrence table");
  stage.input(src);
  const auto graph = build_graph(read_cooccurrence_tsv(in), c.graph_threshold);
  const std::string out = stage.out_path("graph.tsv");
  {
    auto f = open_out(out);
    write_graph_tsv(graph, f);
  }
  stage.output(out);
  std::cout << "vertices " << graph.vertex_count() << "\nedges " << graph.edges.size() << '\n';
  stage.extra() = {{"vertices", graph.vertex_count()}, {"edges", graph.edges.size()}};
  stage.write_manifest(nullptr);
}

void cmd_embed(const PipelineConfig& c) {
  Stage stage("embed", c);
  const std::string src = stage.out_path("graph.tsv");
  auto in = open_in(src, "proximity graph");
  stage.input(src);
  const auto graph = read_graph_tsv(in);
  EmbeddingTrace trace;
  const auto table = train_embeddings(graph, c.embedding, &trace);
  const std::string out = stage.out_path("entity_embeddings.txt");
  {
    auto f = open_out(out);
    write_entity_vectors(table.export_vectors(), f);
  }
  stage.output(out);
  std::cout << "entities " << table.entities.size() << "\ndim " << c.embedding.entity_dim() << '\n';
  stage.extra() = {{"entities", table.entities.size()},
                   {"first_order_windows", trace.first_order_windows},
                   {"second_order_windows", trace.second_order_windows}};
  stage.write_manifest(c.embedding.seed);
}

void cmd_train(const PipelineConfig& c) {
  Stage stage("train", c);
  const auto instances = load_instances(c.paths.train, "paths.train", c.model.max_length, stage);
  if (instances.empty()) throw std::invalid_argument("no usable training instances");
  const auto types = load_types(c, stage);
  const auto vectors = load_vectors(c, stage);
  const PreparedCorpus corpus = prepare_corpus(instances, {}, c.vocab_min_count);
  ModelConfig mc = c.model;
  fit_config(mc, corpus);
  FeatureCoverage cov;
  const auto inputs = encode_training_bags(corpus, mc, vectors ? &*vectors : nullptr,
                                           types ? &*types : nullptr, &cov);
  std::vector<std::string> inventory = types ? types->inventory() : std::vector<std::string>{};

  json losses = json::object();
  for (std::uint64_t seed : c.seeds) {
    ModelParams params(mc, seed);
    if (!c.paths.pretrained_words.empty()) {
      auto words = open_in(c.paths.pretrained_words, "paths.pretrained_words");
      stage.input(c.paths.pretrained_words);
      load_pretrained_words(params, corpus.vocab, words);
    }
    TrainConfig tc;
    tc.epochs = c.epochs;
    tc.batch_size = c.batch_size;
    tc.lr = c.lr;
    tc.seed = seed;
    const auto result = train(inputs, params, tc);
    const std::string out = stage.out_path(checkpoint_name(seed));
    {
      auto f = open_out(out);
      write_checkpoint({params, corpus.relations, corpus.vocab, inventory}, f);
    }
    stage.output(out);
    losses[std::to_string(seed)] = result.epoch_loss;
    std::cout << "seed " << seed << " final_loss "
              << (result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back()) << '\n';
  }
  stage.extra() = {{"bags", inputs.size()},
                   {"relations", corpus.relations.names()},
                   {"vocab_size", corpus.vocab.size()},
                   {"coverage", coverage_json(cov)},
                   {"epoch_loss", losses}};
  stage.write_manifest(c.seeds);
}

json metrics_entry(const Metrics& m) { return metrics_to_json(m); }

void cmd_eval(const PipelineConfig& c) {
  Stage stage("eval", c);
  const auto instances = load_instances(c.paths.test, "paths.test", c.model.max_length, stage);
  const auto test_bags = assemble_test_bags(instances);
  const auto gold = gold_facts(test_bags);
  if (gold.empty()) throw std::invalid_argument("test set has no non-NA facts");
  std::vector<Checkpoint> checkpoints;
  for (std::uint64_t seed : c.seeds) {
    checkpoints.push_back(load_checkpoint(stage.out_path(checkpoint_name(seed)), c, stage));
  }
  const auto types = load_types(c, stage);
  const auto vectors = load_vectors(c, stage);

  std::vector<Metrics> runs;
  json per_seed = json::array();
  json coverage;
  for (std::size_t i = 0; i < c.seeds.size(); ++i) {
    const std::uint64_t seed = c.seeds[i];
    const Checkpoint& ck = checkpoints[i];
    FeatureCoverage cov;
    const auto inputs =
        encode_pair_bags(test_bags, ck.vocab, ck.relations, ck.params.config(),
                         vectors ? &*vectors : nullptr, types ? &*types : nullptr, &cov);
    coverage = coverage_json(cov);
    const auto ranked = predict(inputs, ck.params, ck.relations);
    const Metrics m = evaluate(ranked, gold, c.p_at);
    runs.push_back(m);
    json entry = metrics_entry(m);
    entry["seed"] = seed;
    per_seed.push_back(entry);
    const std::string csv = stage.out_path("pr_seed" + std::to_string(seed) + ".csv");
    {
      auto f = open_out(csv);
      write_pr_csv(pr_curve(ranked, gold), f);
    }
    stage.output(csv);
    std::cout << "seed " << seed << " auc " << fmt(m.auc) << " f1 " << fmt(m.f1) << '\n';
  }
  json metrics = metrics_entry(mean_metrics(runs));
  metrics["seeds"] = per_seed;
  const std::string out = stage.out_path("metrics.json");
  {
    auto f = open_out(out);
    f << metrics.dump(2) << '\n';
  }
  stage.output(out);
  stage.extra() = {{"test_bags", test_bags.size()}, {"gold_facts", gold.size()},
                   {"coverage", coverage}};
  stage.write_manifest(c.seeds);
}

void cmd_predict(const PipelineConfig& c, const std::string& pairs_path,
                 const std::string& sentences_path, std::string checkpoint_path) {
  Stage stage("predict", c);
  if (checkpoint_path.empty()) checkpoint_path = stage.out_path(checkpoint_name(c.seeds.front()));
  const Checkpoint ck = load_checkpoint(checkpoint_path, c, stage);
  const ModelConfig& mc = ck.params.config();
  const auto types = load_types(c, stage);
  const auto vectors = load_vectors(c, stage);

  auto pin = open_in(pairs_path, "pairs file");
  stage.input(pairs_path);
  std::vector<std::pair<std::string, std::string>> pairs;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(pin)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(line_no, "pairs file: expected head<TAB>tail");
    pairs.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  std::map<std::pair<std::string, std::string>, std::vector<SentenceInstance>> sentences;
  if (!sentences_path.empty()) {
    for (auto& inst : load_instances(sentences_path, "sentences file", mc.max_length, stage)) {
      sentences[{inst.head_entity, inst.tail_entity}].push_back(std::move(inst));
    }
  }

  const std::string out = stage.out_path("predictions.tsv");
  auto f = open_out(out);
  f << "head\ttail\trelation\tconfidence\tevidence\n";
  std::size_t no_evidence = 0;
  const std::size_t m = ck.relations.size();
  for (const auto& [head, tail] : pairs) {
    Bag bag;
    bag.head_entity = head;
    bag.tail_entity = tail;
    if (auto it = sentences.find({head, tail}); it != sentences.end()) bag.instances = it->second;
    const BagInput in = make_bag_input(bag, ck.vocab, ck.relations, mc,
                                       vectors ? &*vectors : nullptr, types ? &*types : nullptr);
    std::vector<double> conf;
    std::string evidence = "sentences";
    if (!bag.instances.empty()) {
      conf = forward_bag_inference(in, ck.params).confidence;
    } else if (!in.mr_missing || !in.head_types_missing || !in.tail_types_missing) {
      conf = forward_features_only(in, ck.params);
      evidence = "features";
    } else {
      conf.assign(m, 1.0 / static_cast<double>(m));
      evidence = "no-evidence";
      ++no_evidence;
    }
    std::vector<std::size_t> order;
    for (std::size_t r = 1; r < m; ++r) order.push_back(r);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (conf[a] != conf[b]) return conf[a] > conf[b];
      return ck.relations.name(a) < ck.relations.name(b);
    });
    for (std::size_t r : order) {
      f << head << '\t' << tail << '\t' << ck.relations.name(r) << '\t' << fmt(conf[r]) << '\t'
        << evidence << '\n';
    }
  }
  f.close();
  stage.output(out);
  std::cout << "pairs " << pairs.size() << "\nno_evidence " << no_evidence << '\n';
  stage.extra() = {{"pairs", pairs.size()}, {"no_evidence", no_evidence}};
  stage.write_manifest(nullptr);
}

}  // namespace
}  // namespace imrel

int main(int argc, char** argv) {
  using namespace imrel;
  CLI::App app{"Relation extraction with implicit mutual relations"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<std::string> out_dir;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "Pipeline configuration file");
  app.add_option("--seed", seed, "Seed for embeddings and training (replaces train.seeds)");
  app.add_option("--workers", workers, "Worker threads for counting and embedding");
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--set", overrides, "Override a setting, key=value")->take_all();
  app.fallthrough();

  std::string pairs_path, sentences_path, checkpoint_path;
  auto* cooc = app.add_subcommand("cooc", "Count sentence-level entity co-occurrences");
  auto* graph = app.add_subcommand("graph", "Build the entity proximity graph");
  auto* embed = app.add_subcommand("embed", "Train entity embeddings");
  auto* train_cmd = app.add_subcommand("train", "Train the relation classifier");
  auto* eval = app.add_subcommand("eval", "Held-out evaluation");
  auto* predict_cmd = app.add_subcommand("predict", "Rank relations for entity pairs");
  predict_cmd->add_option("--pairs", pairs_path, "head<TAB>tail lines")->required();
  predict_cmd->add_option("--sentences", sentences_path, "Sentences for the pairs (JSONL)");
  predict_cmd->add_option("--checkpoint", checkpoint_path, "Model checkpoint");

  CLI11_PARSE(app, argc, argv);

  try {
    PipelineConfig config;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw MissingInputError("config file not found: " + config_path);
      load_config(in, config);
    }
    for (const auto& o : overrides) apply_override(config, o);
    if (seed) {
      config.embedding.seed = *seed;
      config.seeds = {*seed};
    }
    if (workers) config.embedding.workers = *workers;
    if (out_dir) config.paths.out = *out_dir;
    config.validate();

    if (cooc->parsed()) cmd_cooc(config);
    else if (graph->parsed()) cmd_graph(config);
    else if (embed->parsed()) cmd_embed(config);
    else if (train_cmd->parsed()) cmd_train(config);
    else if (eval->parsed()) cmd_eval(config);
    else if (predict_cmd->parsed()) cmd_predict(config, pairs_path, sentences_path, checkpoint_path);
    return 0;
  } catch (const MissingInputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ArtifactVersionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const ShapeMismatchError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
