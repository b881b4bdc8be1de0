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

// imrel-synth: writes the synthetic fixture (corpora, type catalog, a
// pipeline config and a pairs file) into a directory.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>

#include <CLI11.hpp>

#include "imrel/corpus.hpp"
#include "imrel/synthetic.hpp"

namespace fs = std::filesystem;

namespace {

std::ofstream create(const fs::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

void write_jsonl(const fs::path& p, const std::vector<imrel::SentenceInstance>& rows) {
  auto out = create(p);
  for (const auto& inst : rows) out << imrel::instance_to_json(inst).dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Write the synthetic fixture"};
  std::string dir = "fixture";
  std::uint64_t seed = 7;
  bool small = false;
  app.add_option("--dir", dir, "Output directory");
  app.add_option("--seed", seed, "Generator seed");
  app.add_flag("--small", small, "Reduced model and embedding sizes for quick runs");
  CLI11_PARSE(app, argc, argv);

  try {
    imrel::SyntheticConfig cfg;
    cfg.seed = seed;
    const auto data = imrel::generate_synthetic(cfg);
    const fs::path root = fs::absolute(dir);
    fs::create_directories(root);

    {
      auto out = create(root / "unlabeled.jsonl");
      for (const auto& line : data.unlabeled_lines) out << line << '\n';
    }
    write_jsonl(root / "train.jsonl", data.train);
    write_jsonl(root / "test.jsonl", data.test);
    {
      auto out = create(root / "type_inventory.txt");
      for (const auto& t : data.type_inventory) out << t << '\n';
    }
    {
      auto out = create(root / "types.tsv");
      for (const auto& [entity, types] : data.entity_types) {
        out << entity << '\t';
        for (std::size_t i = 0; i < types.size(); ++i) out << (i ? "," : "") << types[i];
        out << '\n';
      }
    }
    {
      // Training pairs in generation order, one per line.
      auto out = create(root / "pairs.tsv");
      std::set<std::pair<std::string, std::string>> seen;
      for (const auto& inst : data.train) {
        if (seen.insert({inst.head_entity, inst.tail_entity}).second) {
          out << inst.head_entity << '\t' << inst.tail_entity << '\n';
        }
      }
    }
    {
      auto out = create(root / "pipeline.conf");
      out << "[paths]\n"
          << "unlabeled = " << (root / "unlabeled.jsonl").string() << '\n'
          << "train = " << (root / "train.jsonl").string() << '\n'
          << "test = " << (root / "test.jsonl").string() << '\n'
          << "types = " << (root / "types.tsv").string() << '\n'
          << "type_inventory = " << (root / "type_inventory.txt").string() << '\n'
          << "out = " << (root / "out").string() << "\n\n"
          << "[model]\n"
          << "num_types = " << data.type_inventory.size() << '\n';
      if (small) {
        out << "word_dim = 10\nfilters = 20\nentity_dim = 32\n\n"
            << "[embedding]\nd1 = 16\nd2 = 16\nsamples = 300000\n\n"
            << "[train]\nepochs = 5\nbatch_size = 32\n";
      }
    }
    std::cout << "wrote fixture to " << root.string() << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
