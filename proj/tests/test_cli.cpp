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

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "app.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace gif;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
  json summary() const { return json::parse(out); }
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "gif");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = app::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path write_config(const fs::path& dir, const json& j) {
  const auto p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

json small_config(const fs::path& out) {
  return {{"out_dir", out.string()},
          {"dataset", {{"m", 16}, {"d", 8}, {"head_count", 8}, {"tail_count", 8}, {"test_per_identity", 2}}},
          {"uniformity", {{"epochs", 100}}},
          {"model", {{"hidden", 16}}},
          {"training", {{"epochs", 5}, {"batch", 16}}}};
}

/// Runs init-vectors, optimize, tokenize and train. `extra` goes to every
/// stage, `per_stage` only to the named one.
Outcome pipeline(const fs::path& config, const std::vector<std::string>& extra = {},
                 const std::map<std::string, std::vector<std::string>>& per_stage = {}) {
  Outcome r;
  for (const std::string cmd : {"init-vectors", "optimize", "tokenize", "train"}) {
    std::vector<std::string> args{cmd, "--config", config.string()};
    args.insert(args.end(), extra.begin(), extra.end());
    if (auto it = per_stage.find(cmd); it != per_stage.end()) args.insert(args.end(), it->second.begin(), it->second.end());
    r = invoke(args);
    if (r.code != 0) return r;
  }
  return r;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("exit codes") {
  const auto dir = test::scratch_dir("cli_exit");
  CHECK(invoke({"--help"}).code == 0);
  CHECK(invoke({}).code == 2);
  CHECK(invoke({"bogus"}).code == 2);
  CHECK(invoke({"cost", "--config", (dir / "missing.json").string()}).code == 2);
  const auto bad = write_config(dir, {{"dataset", {{"mm", 3}}}});
  const auto r = invoke({"cost", "--config", bad.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("dataset.mm") != std::string::npos);
  const auto typed = write_config(dir, {{"seed", "seven"}});
  CHECK(invoke({"cost", "--config", typed.string()}).code == 2);
  CHECK(invoke({"optimize", "--out-dir", (dir / "empty").string()}).code == 2);
  CHECK(invoke({"cost", "--threads", "0"}).code == 2);
}

TEST_CASE("numeric abort exits with 3") {
  const auto dir = test::scratch_dir("cli_nan");
  auto cfg = small_config(dir / "o");
  cfg["training"]["lr"] = 1e300;
  const auto r = pipeline(write_config(dir, cfg));
  CHECK(r.code == 3);
  CHECK(r.err.find("numeric") != std::string::npos);
}

TEST_CASE("random init is reproducible given the seed") {
  const auto dir = test::scratch_dir("cli_random");
  const auto cfg = write_config(dir, small_config(dir / "a"));
  REQUIRE(invoke({"init-vectors", "--config", cfg.string(), "--init", "random"}).code == 0);
  REQUIRE(invoke({"init-vectors", "--config", cfg.string(), "--init", "random", "--out-dir", (dir / "b").string()}).code == 0);
  REQUIRE(invoke({"init-vectors", "--config", cfg.string(), "--init", "random", "--seed", "9", "--out-dir", (dir / "c").string()}).code == 0);
  CHECK(slurp(dir / "a" / "vectors.cvm") == slurp(dir / "b" / "vectors.cvm"));
  CHECK(slurp(dir / "a" / "vectors.cvm") != slurp(dir / "c" / "vectors.cvm"));
  const auto h = load_code_vectors(dir / "a" / "vectors.cvm");
  CHECK(h.m() == 16);
  CHECK(h.d() == 8);
}

TEST_CASE("zero-noise synthetic init recovers the prototypes") {
  const auto dir = test::scratch_dir("cli_zero_noise");
  auto j = small_config(dir / "o");
  j["dataset"]["dispersion"] = 1e300;
  const auto cfg = app::ExperimentConfig::from_json(j);
  REQUIRE(invoke({"init-vectors", "--config", write_config(dir, j).string()}).code == 0);
  const auto h = load_code_vectors(dir / "o" / "vectors.cvm");
  const auto gen = gen_identities(16, 8, 1e300, app::stage_seed(cfg, app::Stage::kPrototypes), 0.5);
  CHECK((h.rows() - gen.prototypes()).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("embedding CSV in, per-class means out") {
  const auto dir = test::scratch_dir("cli_csv");
  const auto gen = gen_identities(5, 4, 50.0, 3);
  EmbeddingProvider::from_dataset(sample_longtail(gen, 1.0, 3, 3, 4)).write_csv(dir / "emb.csv");
  json j{{"out_dir", (dir / "o").string()}, {"dataset", {{"source", "csv"}, {"path", (dir / "emb.csv").string()}}}};
  const auto r = invoke({"init-vectors", "--config", write_config(dir, j).string()});
  REQUIRE(r.code == 0);
  CHECK(r.summary()["m"] == 5);
  CHECK(load_code_vectors(dir / "o" / "vectors.cvm").m() == 5);
  j["dataset"]["path"] = (dir / "nope.csv").string();
  CHECK(invoke({"init-vectors", "--config", write_config(dir, j).string()}).code == 2);
}

TEST_CASE("optimize on the square reaches the 90 degree layout") {
  const auto dir = test::scratch_dir("cli_square");
  json j{{"out_dir", (dir / "o").string()},
         {"init", "random"},
         {"dataset", {{"m", 4}, {"d", 2}, {"min_separation", 0.0}}},
         {"uniformity", {{"epochs", 1000}}}};
  const auto cfg = write_config(dir, j);
  REQUIRE(invoke({"init-vectors", "--config", cfg.string()}).code == 0);
  const auto r = invoke({"optimize", "--config", cfg.string()});
  REQUIRE(r.code == 0);
  const auto s = r.summary()["separation"];
  CHECK(s["min"].get<double>() == doctest::Approx(1.0).epsilon(0.02));
  CHECK(s["min"].get<double>() <= s["mean"].get<double>());
  CHECK(s["mean"].get<double>() <= s["max"].get<double>());
}

TEST_CASE("zero optimization epochs copy the input") {
  const auto dir = test::scratch_dir("cli_copy");
  auto j = small_config(dir / "o");
  j["uniformity"]["epochs"] = 0;
  const auto cfg = write_config(dir, j);
  REQUIRE(invoke({"init-vectors", "--config", cfg.string()}).code == 0);
  REQUIRE(invoke({"optimize", "--config", cfg.string()}).code == 0);
  CHECK(load_code_vectors(dir / "o" / "vectors.cvm") == load_code_vectors(dir / "o" / "optimized.cvm"));
}

TEST_CASE("pipeline is deterministic and stamps the config hash everywhere") {
  const auto dir = test::scratch_dir("cli_determinism");
  const auto cfg = write_config(dir, small_config(dir / "a"));
  const auto r = pipeline(cfg);
  REQUIRE(r.code == 0);
  const std::string hash = r.summary()["config_hash"];
  CHECK(hash.size() == 16);
  REQUIRE(pipeline(cfg, {"--out-dir", (dir / "b").string(), "--threads", "2"}).code == 0);
  for (const char* f : {"metrics.jsonl", "codes.txt", "tree.json", "eval.json", "model.ckpt", "optimized.cvm",
                        "separation.json", "manifest.json"}) {
    CAPTURE(f);
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  }
  for (const auto& entry : fs::directory_iterator(dir / "a")) {
    const auto p = entry.path();
    if (p.extension() == ".cvm") {
      CHECK(fs::exists(p.string() + ".meta.json"));
    } else if (p.extension() == ".ckpt") {
      CHECK(read_checkpoint(p).config_hash == hash);
    } else {
      CAPTURE(p);
      CHECK(slurp(p).find(hash) != std::string::npos);
    }
  }
  std::ifstream metrics(dir / "a" / "metrics.jsonl");
  std::string line;
  while (std::getline(metrics, line)) CHECK(json::parse(line)["config_hash"] == hash);
}

TEST_CASE("environment overrides only paths and threads") {
  const auto dir = test::scratch_dir("cli_env");
  const auto cfg = write_config(dir, small_config(dir / "a"));
  const auto base = invoke({"cost", "--config", cfg.string()});
  REQUIRE(base.code == 0);
  ::setenv("GIF_OUT_DIR", (dir / "env").string().c_str(), 1);
  ::setenv("GIF_THREADS", "3", 1);
  const auto env = invoke({"cost", "--config", cfg.string()});
  const auto flag = invoke({"cost", "--config", cfg.string(), "--out-dir", (dir / "flag").string()});
  ::setenv("GIF_THREADS", "x", 1);
  const auto bad = invoke({"cost", "--config", cfg.string()});
  ::unsetenv("GIF_OUT_DIR");
  ::unsetenv("GIF_THREADS");
  REQUIRE(env.code == 0);
  CHECK(fs::exists(dir / "env" / "cost.csv"));
  CHECK(fs::exists(dir / "flag" / "cost.csv"));
  CHECK(env.summary()["config_hash"] == base.summary()["config_hash"]);
  CHECK(bad.code == 2);
  const auto seeded = invoke({"cost", "--config", cfg.string(), "--seed", "5"});
  CHECK(seeded.summary()["config_hash"] != base.summary()["config_hash"]);
}

TEST_CASE("train refuses inconsistent inputs") {
  const auto dir = test::scratch_dir("cli_mismatch");
  auto j = small_config(dir / "a");
  REQUIRE(pipeline(write_config(dir, j)).code == 0);
  auto k = j;
  k["out_dir"] = (dir / "b").string();
  k["tokenizer"] = {{"l", 1}, {"v", 16}};
  k["inputs"] = {{"optimized", (dir / "a" / "optimized.cvm").string()}};
  REQUIRE(invoke({"tokenize", "--config", write_config(dir, k).string()}).code == 0);
  k["inputs"]["codes"] = (dir / "b" / "codes.txt").string();
  k["inputs"]["tree"] = (dir / "a" / "tree.json").string();
  const auto r = invoke({"train", "--config", write_config(dir, k).string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("inconsistent") != std::string::npos);

  auto other = j;
  other["dataset"]["m"] = 20;
  other["inputs"] = {{"optimized", (dir / "a" / "optimized.cvm").string()},
                     {"codes", (dir / "a" / "codes.txt").string()},
                     {"tree", (dir / "a" / "tree.json").string()}};
  other["out_dir"] = (dir / "c").string();
  CHECK(invoke({"train", "--config", write_config(dir, other).string()}).code == 2);
}

TEST_CASE("random code assignment builds a consistent tree") {
  const auto dir = test::scratch_dir("cli_atomic");
  const auto cfg = write_config(dir, small_config(dir / "o"));
  const auto r = pipeline(cfg, {}, {{"init-vectors", {"--init", "random"}}, {"tokenize", {"--codes", "random"}}});
  REQUIRE(r.code == 0);
  const auto codes = read_codes(dir / "o" / "codes.txt");
  const auto tree = read_tree(dir / "o" / "tree.json");
  for (const auto& c : codes.codes) CHECK(decode(c, tree) == c.identity);
}

TEST_CASE("gamma flag feeds the alignment term") {
  const auto dir = test::scratch_dir("cli_gamma");
  const auto cfg = write_config(dir, small_config(dir / "o"));
  const auto on = pipeline(cfg, {}, {{"train", {"--gamma-balance", "1"}}});
  const auto off = pipeline(cfg, {"--out-dir", (dir / "off").string()}, {{"train", {"--gamma-balance", "0"}}});
  REQUIRE(on.code == 0);
  REQUIRE(off.code == 0);
  CHECK(on.summary()["config_hash"] != off.summary()["config_hash"]);
  CHECK(on.summary()["mean_alignment"].get<double>() > off.summary()["mean_alignment"].get<double>());
}

TEST_CASE("collapse writes trajectories") {
  const auto dir = test::scratch_dir("cli_collapse");
  json j{{"out_dir", (dir / "o").string()},
         {"dataset", {{"m", 8}, {"d", 4}, {"dispersion", 100}}},
         {"uniformity", {{"epochs", 50}}},
         {"model", {{"hidden", 8}}},
         {"collapse", {{"head_count", 10}, {"epochs", 3}, {"head_fraction", 0.5}}}};
  const auto r = invoke({"collapse", "--config", write_config(dir, j).string()});
  REQUIRE(r.code == 0);
  const auto s = r.summary();
  CHECK(s["gif"]["identical"] == true);
  CHECK(s["head_identities"] == 4);
  std::ifstream in(dir / "o" / "collapse_longtail.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "# config_hash=" + s["config_hash"].get<std::string>());
  std::getline(in, line);
  CHECK(line == "epoch,min,mean,max");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 4);
  j["dataset"] = {{"source", "csv"}, {"path", (dir / "x.csv").string()}};
  CHECK(invoke({"collapse", "--config", write_config(dir, j).string()}).code == 2);
}

TEST_CASE("cost table") {
  const auto dir = test::scratch_dir("cli_cost");
  json j{{"out_dir", (dir / "o").string()}, {"cost", {{"m_list", {1e3, 1e6}}, {"methods", {"fc", "gif:6x10"}}}}};
  const auto r = invoke({"cost", "--config", write_config(dir, j).string()});
  REQUIRE(r.code == 0);
  const auto text = slurp(dir / "o" / "cost.csv");
  CHECK(text.find("1000000,gif:6x10,30720,") != std::string::npos);
  CHECK(text.find("1000,fc,512000,") != std::string::npos);
  j["cost"]["methods"] = {"softmax"};
  CHECK(invoke({"cost", "--config", write_config(dir, j).string()}).code == 2);
  j["cost"] = {{"m_list", {10, 5}}};
  CHECK(invoke({"cost", "--config", write_config(dir, j).string()}).code == 2);
}

}  // TEST_SUITE
