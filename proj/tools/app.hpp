// Copyright 2026 The gifcodes Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Experiment configuration and the subcommands of the `gif` tool.
//
// Config is JSON. Every key is optional; unknown keys are rejected.
//
//   {
//     "seed": 0, "threads": 1, "out_dir": "out",
//     "dataset": {"source": "synthetic" | "csv" | "cvm",
//                 "m": 64, "d": 32, "dispersion": 500, "min_separation": 0.5,
//                 "head_fraction": 1.0, "head_count": 20, "tail_count": 20,
//                 "test_per_identity": 5, "path": "", "index": ""},
//     "init": "mean" | "random",
//     "uniformity": {"t": 2, "lr": 0.1, "epochs": 1000, "batch_rows": 0},
//     "tokenizer": {"l": 0, "v": 0, "kmeans_iters": 100, "restarts": 8,
//                   "codes": "tree" | "random"},
//     "model": {"hidden": 64},
//     "training": {"epochs": 30, "batch": 64, "lr": 0.05, "momentum": 0.9,
//                  "scale_s": 16, "gamma_balance": 1, "lambdas": []},
//     "collapse": {"head_fraction": 0.25, "head_count": 100, "tail_count": 2,
//                  "epochs": 30, "batch": 64, "lr": 0.1, "scale_s": 4,
//                  "gif_init": "random"},
//     "cost": {"m_list": [1e3, ..., 1e7], "d": 512,
//              "methods": ["fc", "subset:0.3", "gif"], "batch_size": 0},
//     "inputs": {"vectors": "", "optimized": "", "codes": "", "tree": ""}
//   }
//
// tokenizer l = 0 or v = 0 picks suggest_length(m). Empty inputs resolve to
// the default artifact names inside out_dir. The config hash covers every
// field except out_dir and threads.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "gif/gif.hpp"
#include <nlohmann/json.hpp>

namespace gif::app {

struct DatasetSpec {
  std::string source = "synthetic";
  int m = 64;
  int d = 32;
  double dispersion = 500.0;
  double min_separation = 0.5;
  double head_fraction = 1.0;
  int head_count = 20;
  int tail_count = 20;
  int test_per_identity = 5;
  std::string path;
  std::string index;
};

struct UniformitySpec {
  double t = 2.0;
  double lr = 0.1;
  int epochs = 1000;
  Index batch_rows = 0;
};

struct TokenizerSpec {
  int l = 0;
  int v = 0;
  int kmeans_iters = 100;
  int restarts = 8;
  std::string codes = "tree";
};

struct TrainingSpec {
  int epochs = 30;
  int batch = 64;
  double lr = 0.05;
  double momentum = 0.9;
  double scale_s = 16.0;
  double gamma_balance = 1.0;
  std::vector<double> lambdas;
};

struct CollapseSpec {
  double head_fraction = 0.25;
  int head_count = 100;
  int tail_count = 2;
  int epochs = 30;
  int batch = 64;
  double lr = 0.1;
  double scale_s = 4.0;
  std::string gif_init = "random";
};

struct CostSpec {
  std::vector<std::int64_t> m_list{1000, 10000, 100000, 1000000, 10000000};
  std::int64_t d = 512;
  std::vector<std::string> methods{"fc", "subset:0.3", "gif"};
  std::int64_t batch_size = 0;
};

struct InputPaths {
  std::string vectors;
  std::string optimized;
  std::string codes;
  std::string tree;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out_dir = "out";
  DatasetSpec dataset;
  std::string init = "mean";
  UniformitySpec uniformity;
  TokenizerSpec tokenizer;
  int hidden = 64;
  TrainingSpec training;
  CollapseSpec collapse;
  CostSpec cost;
  InputPaths inputs;

  /// Throws ConfigError on unknown keys, wrong types or out-of-range values.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void validate() const;

  /// 16 hex digits, FNV-1a 64 of the canonical JSON minus out_dir and threads.
  std::string hash() const;
};

std::uint64_t fnv1a64(std::string_view bytes);

/// Stage seeds derived from the master seed.
enum class Stage : std::uint64_t {
  kPrototypes = 1,
  kTrainSamples,
  kBackbone,
  kCentroids,
  kBaselineFit,
  kTestSamples,
  kRandomInit,
  kUniformity,
  kTokenizer,
  kHeads,
  kFit,
};
std::uint64_t stage_seed(const ExperimentConfig& cfg, Stage stage);

/// Default artifact locations inside out_dir.
struct Artifacts {
  std::filesystem::path vectors, optimized, codes, tree, tree_centroids, checkpoint, metrics,
      evaluation, separation, manifest, collapse_longtail, collapse_balanced, collapse_summary,
      cost;
  explicit Artifacts(const ExperimentConfig& cfg);
};

/// Training and held-out samples for the configured dataset.
struct Data {
  LongTailDataset train;
  std::vector<Sample> test;
  EmbeddingProvider provider;
};
Data load_data(const ExperimentConfig& cfg);

/// Writes a CVM1 file plus `<path>.meta.json` carrying the hash.
void save_vectors(const std::filesystem::path& path, const CodeVectorMatrix& h,
                  const std::string& hash, const nlohmann::json& extra = {});

// Subcommands. Each writes its artifacts and returns a JSON summary.
nlohmann::json cmd_init_vectors(const ExperimentConfig& cfg);
nlohmann::json cmd_optimize(const ExperimentConfig& cfg);
nlohmann::json cmd_tokenize(const ExperimentConfig& cfg);
nlohmann::json cmd_train(const ExperimentConfig& cfg);
nlohmann::json cmd_collapse(const ExperimentConfig& cfg);
nlohmann::json cmd_cost(const ExperimentConfig& cfg);

/// Full command line entry point. Exit codes: 0 ok, 2 config or input
/// error, 3 numeric abort, 1 anything else.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gif::app
