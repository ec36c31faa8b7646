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

#include "app.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"

namespace gif::app {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError(label() + "must be an object");
  }

  template <typename T>
  void get(const char* key, T& dst) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      dst = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config " + label() + key + ": wrong type");
    }
  }

  std::optional<Section> child(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key)) return std::nullopt;
    return Section(j_.at(key), label() + key);
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("config: unknown key " + label() + item.key());
    }
  }

 private:
  std::string label() const { return name_.empty() ? "" : name_ + "."; }

  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("config: " + what);
}

Method parse_method(const std::string& tag) {
  if (tag == "fc") return Method::fc();
  if (tag == "gif") return Method::gif();
  if (tag.rfind("subset:", 0) == 0) {
    try {
      std::size_t used = 0;
      const double alpha = std::stod(tag.substr(7), &used);
      if (used == tag.size() - 7) return Method::subset(alpha);
    } catch (const std::exception&) {
    }
  } else if (tag.rfind("gif:", 0) == 0) {
    int l = 0, v = 0;
    char x = 0;
    std::istringstream is(tag.substr(4));
    if (is >> l >> x >> v && x == 'x' && is.peek() == std::char_traits<char>::eof()) {
      return Method::gif(l, v);
    }
  }
  throw ConfigError("config: unknown cost method '" + tag + "'");
}

fs::path input_or(const std::string& configured, const fs::path& fallback) {
  const fs::path p = configured.empty() ? fallback : fs::path(configured);
  if (!fs::exists(p)) throw ConfigError("missing input file " + p.string());
  return p;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << std::setw(2) << j << '\n';
}

json separation_json(const SeparationReport& r) {
  return {{"min", r.min_dist},
          {"mean", r.mean_dist},
          {"max", r.max_dist},
          {"exact", r.exact},
          {"sampled_pairs", r.sampled_pairs}};
}

UniformityConfig uniformity_config(const ExperimentConfig& cfg) {
  UniformityConfig u;
  u.t = cfg.uniformity.t;
  u.lr = cfg.uniformity.lr;
  u.epochs = cfg.uniformity.epochs;
  u.batch_rows = cfg.uniformity.batch_rows;
  u.seed = stage_seed(cfg, Stage::kUniformity);
  u.threads = cfg.threads;
  return u;
}

void prepare_out_dir(const ExperimentConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + cfg.out_dir + ": " + ec.message());
}

struct CollapseRun {
  BaselineResult baseline;
  CodeVectorMatrix centroids;
  SeparationReport gif;
};

CollapseRun collapse_run(const ExperimentConfig& cfg, const IdentityGenerator& gen,
                         const LongTailDataset& ds) {
  const auto& c = cfg.collapse;
  Backbone bb({gen.d(), cfg.hidden, gen.d()}, stage_seed(cfg, Stage::kBackbone));
  auto w = CentroidMatrix::random(gen.m(), gen.d(), c.scale_s, stage_seed(cfg, Stage::kCentroids));
  BaselineConfig bc;
  bc.epochs = c.epochs;
  bc.batch_size = c.batch;
  bc.lr = c.lr;
  bc.momentum = cfg.training.momentum;
  bc.seed = stage_seed(cfg, Stage::kBaselineFit);
  auto result = train_baseline(ds, bb, w, bc);

  const CodeVectorMatrix h0 =
      c.gif_init == "mean"
          ? per_class_mean_init(EmbeddingProvider::from_dataset(ds), ds)
          : random_code_vectors(gen.m(), gen.d(), stage_seed(cfg, Stage::kRandomInit));
  const auto h = optimize_code_vectors(h0, uniformity_config(cfg));
  return {std::move(result), w.as_rows(), separation_metrics(h)};
}

void write_trajectory(const fs::path& path, const BaselineResult& r, const std::string& hash) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << "# config_hash=" << hash << '\n' << "epoch,min,mean,max\n" << std::setprecision(17);
  out << 0 << ',' << r.initial.min_dist << ',' << r.initial.mean_dist << ',' << r.initial.max_dist
      << '\n';
  for (const auto& e : r.trajectory) {
    out << e.epoch + 1 << ',' << e.separation.min_dist << ',' << e.separation.mean_dist << ','
        << e.separation.max_dist << '\n';
  }
}

json baseline_summary(const BaselineResult& r) {
  json j{{"initial", separation_json(r.initial)}};
  if (!r.trajectory.empty()) {
    const auto& last = r.trajectory.back();
    j["final"] = separation_json(last.separation);
    j["final_tail"] = separation_json(last.tail_separation);
    j["head_push_pull"] = last.head_push_pull;
    j["tail_push_pull"] = last.tail_push_pull;
    j["loss"] = last.loss;
  }
  return j;
}

double final_min(const BaselineResult& r) {
  return r.trajectory.empty() ? r.initial.min_dist : r.trajectory.back().separation.min_dist;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t stage_seed(const ExperimentConfig& cfg, Stage stage) {
  return cfg.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(stage);
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  Section root(j, "");
  root.get("seed", c.seed);
  root.get("threads", c.threads);
  root.get("out_dir", c.out_dir);
  root.get("init", c.init);
  if (auto s = root.child("dataset")) {
    auto& d = c.dataset;
    s->get("source", d.source);
    s->get("m", d.m);
    s->get("d", d.d);
    s->get("dispersion", d.dispersion);
    s->get("min_separation", d.min_separation);
    s->get("head_fraction", d.head_fraction);
    s->get("head_count", d.head_count);
    s->get("tail_count", d.tail_count);
    s->get("test_per_identity", d.test_per_identity);
    s->get("path", d.path);
    s->get("index", d.index);
    s->finish();
  }
  if (auto s = root.child("uniformity")) {
    s->get("t", c.uniformity.t);
    s->get("lr", c.uniformity.lr);
    s->get("epochs", c.uniformity.epochs);
    s->get("batch_rows", c.uniformity.batch_rows);
    s->finish();
  }
  if (auto s = root.child("tokenizer")) {
    s->get("l", c.tokenizer.l);
    s->get("v", c.tokenizer.v);
    s->get("kmeans_iters", c.tokenizer.kmeans_iters);
    s->get("restarts", c.tokenizer.restarts);
    s->get("codes", c.tokenizer.codes);
    s->finish();
  }
  if (auto s = root.child("model")) {
    s->get("hidden", c.hidden);
    s->finish();
  }
  if (auto s = root.child("training")) {
    auto& t = c.training;
    s->get("epochs", t.epochs);
    s->get("batch", t.batch);
    s->get("lr", t.lr);
    s->get("momentum", t.momentum);
    s->get("scale_s", t.scale_s);
    s->get("gamma_balance", t.gamma_balance);
    s->get("lambdas", t.lambdas);
    s->finish();
  }
  if (auto s = root.child("collapse")) {
    auto& k = c.collapse;
    s->get("head_fraction", k.head_fraction);
    s->get("head_count", k.head_count);
    s->get("tail_count", k.tail_count);
    s->get("epochs", k.epochs);
    s->get("batch", k.batch);
    s->get("lr", k.lr);
    s->get("scale_s", k.scale_s);
    s->get("gif_init", k.gif_init);
    s->finish();
  }
  if (auto s = root.child("cost")) {
    std::vector<double> ms;
    s->get("m_list", ms);
    if (!ms.empty()) {
      c.cost.m_list.clear();
      for (double m : ms) {
        require(m >= 1 && m <= 9e15 && m == static_cast<double>(static_cast<std::int64_t>(m)),
                "cost.m_list entries must be positive integers");
        c.cost.m_list.push_back(static_cast<std::int64_t>(m));
      }
    }
    s->get("d", c.cost.d);
    s->get("methods", c.cost.methods);
    s->get("batch_size", c.cost.batch_size);
    s->finish();
  }
  if (auto s = root.child("inputs")) {
    s->get("vectors", c.inputs.vectors);
    s->get("optimized", c.inputs.optimized);
    s->get("codes", c.inputs.codes);
    s->get("tree", c.inputs.tree);
    s->finish();
  }
  root.finish();
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

json ExperimentConfig::to_json() const {
  const auto& d = dataset;
  const auto& t = training;
  const auto& k = collapse;
  return {{"seed", seed},
          {"threads", threads},
          {"out_dir", out_dir},
          {"init", init},
          {"dataset",
           {{"source", d.source},
            {"m", d.m},
            {"d", d.d},
            {"dispersion", d.dispersion},
            {"min_separation", d.min_separation},
            {"head_fraction", d.head_fraction},
            {"head_count", d.head_count},
            {"tail_count", d.tail_count},
            {"test_per_identity", d.test_per_identity},
            {"path", d.path},
            {"index", d.index}}},
          {"uniformity",
           {{"t", uniformity.t},
            {"lr", uniformity.lr},
            {"epochs", uniformity.epochs},
            {"batch_rows", uniformity.batch_rows}}},
          {"tokenizer",
           {{"l", tokenizer.l},
            {"v", tokenizer.v},
            {"kmeans_iters", tokenizer.kmeans_iters},
            {"restarts", tokenizer.restarts},
            {"codes", tokenizer.codes}}},
          {"model", {{"hidden", hidden}}},
          {"training",
           {{"epochs", t.epochs},
            {"batch", t.batch},
            {"lr", t.lr},
            {"momentum", t.momentum},
            {"scale_s", t.scale_s},
            {"gamma_balance", t.gamma_balance},
            {"lambdas", t.lambdas}}},
          {"collapse",
           {{"head_fraction", k.head_fraction},
            {"head_count", k.head_count},
            {"tail_count", k.tail_count},
            {"epochs", k.epochs},
            {"batch", k.batch},
            {"lr", k.lr},
            {"scale_s", k.scale_s},
            {"gif_init", k.gif_init}}},
          {"cost",
           {{"m_list", cost.m_list},
            {"d", cost.d},
            {"methods", cost.methods},
            {"batch_size", cost.batch_size}}},
          {"inputs",
           {{"vectors", inputs.vectors},
            {"optimized", inputs.optimized},
            {"codes", inputs.codes},
            {"tree", inputs.tree}}}};
}

void ExperimentConfig::validate() const {
  const auto& d = dataset;
  require(threads >= 1, "threads must be >= 1");
  require(!out_dir.empty(), "out_dir must not be empty");
  require(init == "mean" || init == "random", "init must be mean or random");
  require(d.source == "synthetic" || d.source == "csv" || d.source == "cvm",
          "dataset.source must be synthetic, csv or cvm");
  if (d.source == "synthetic") {
    require(d.m >= 2 && d.d >= 2, "dataset needs m >= 2 and d >= 2");
    require(d.dispersion > 0, "dataset.dispersion must be positive");
    require(d.min_separation >= 0 && d.min_separation < 2, "dataset.min_separation must be in [0, 2)");
    require(d.head_fraction > 0 && d.head_fraction <= 1, "dataset.head_fraction must be in (0, 1]");
    require(d.head_count >= 1 && d.tail_count >= 1, "dataset counts must be >= 1");
    require(d.test_per_identity >= 0, "dataset.test_per_identity must be >= 0");
  } else {
    require(!d.path.empty(), "dataset.path is required for source " + d.source);
    require(d.source == "csv" || !d.index.empty(), "dataset.index is required for source cvm");
  }
  require(uniformity.t > 0 && uniformity.lr > 0, "uniformity t and lr must be positive");
  require(uniformity.epochs >= 0 && uniformity.batch_rows >= 0,
          "uniformity epochs and batch_rows must be >= 0");
  require(tokenizer.l >= 0 && tokenizer.v >= 0, "tokenizer l and v must be >= 0");
  require(tokenizer.kmeans_iters >= 1 && tokenizer.restarts >= 1,
          "tokenizer kmeans_iters and restarts must be >= 1");
  require(tokenizer.codes == "tree" || tokenizer.codes == "random",
          "tokenizer.codes must be tree or random");
  require(hidden >= 1, "model.hidden must be >= 1");
  const auto& t = training;
  require(t.epochs >= 0 && t.batch >= 1, "training needs epochs >= 0 and batch >= 1");
  require(t.lr > 0 && t.scale_s > 0, "training lr and scale_s must be positive");
  require(t.momentum >= 0 && t.momentum < 1, "training.momentum must be in [0, 1)");
  require(t.gamma_balance >= 0, "training.gamma_balance must be >= 0");
  const auto& k = collapse;
  require(k.head_fraction > 0 && k.head_fraction <= 1, "collapse.head_fraction must be in (0, 1]");
  require(k.head_count >= 1 && k.tail_count >= 1, "collapse counts must be >= 1");
  require(k.epochs >= 0 && k.batch >= 1 && k.lr > 0 && k.scale_s > 0,
          "collapse needs epochs >= 0, batch >= 1 and positive lr and scale_s");
  require(k.gif_init == "mean" || k.gif_init == "random", "collapse.gif_init must be mean or random");
  require(!cost.m_list.empty() && cost.d >= 1 && cost.batch_size >= 0,
          "cost needs a non-empty m_list, d >= 1 and batch_size >= 0");
  for (std::size_t i = 1; i < cost.m_list.size(); ++i) {
    require(cost.m_list[i] >= cost.m_list[i - 1], "cost.m_list must be ascending");
  }
  for (const auto& m : cost.methods) parse_method(m);
}

std::string ExperimentConfig::hash() const {
  json j = to_json();
  j.erase("out_dir");
  j.erase("threads");
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(j.dump());
  return os.str();
}

Artifacts::Artifacts(const ExperimentConfig& cfg) {
  const fs::path o = cfg.out_dir;
  vectors = o / "vectors.cvm";
  optimized = o / "optimized.cvm";
  codes = o / "codes.txt";
  tree = o / "tree.json";
  tree_centroids = o / "tree_centroids.cvm";
  checkpoint = o / "model.ckpt";
  metrics = o / "metrics.jsonl";
  evaluation = o / "eval.json";
  separation = o / "separation.json";
  manifest = o / "manifest.json";
  collapse_longtail = o / "collapse_longtail.csv";
  collapse_balanced = o / "collapse_balanced.csv";
  collapse_summary = o / "collapse.json";
  cost = o / "cost.csv";
}

Data load_data(const ExperimentConfig& cfg) {
  const auto& d = cfg.dataset;
  if (d.source == "synthetic") {
    const auto gen = gen_identities(d.m, d.d, d.dispersion, stage_seed(cfg, Stage::kPrototypes),
                                    d.min_separation);
    auto train = sample_longtail(gen, d.head_fraction, d.head_count, d.tail_count,
                                 stage_seed(cfg, Stage::kTrainSamples));
    std::vector<Sample> test;
    if (d.test_per_identity > 0) {
      test = sample_longtail(gen, 1.0, d.test_per_identity, d.test_per_identity,
                             stage_seed(cfg, Stage::kTestSamples))
                 .samples;
    }
    auto provider = EmbeddingProvider::from_dataset(train);
    return {std::move(train), std::move(test), std::move(provider)};
  }
  const fs::path path = input_or(d.path, {});
  auto provider = d.source == "csv" ? EmbeddingProvider::from_csv(path)
                                    : EmbeddingProvider::from_cvm(path, input_or(d.index, {}));
  auto train = provider.as_dataset();
  return {std::move(train), {}, std::move(provider)};
}

void save_vectors(const fs::path& path, const CodeVectorMatrix& h, const std::string& hash,
                  const json& extra) {
  save_code_vectors(path, h);
  json meta = extra.is_object() ? extra : json::object();
  meta["config_hash"] = hash;
  meta["m"] = h.m();
  meta["d"] = h.d();
  write_json(fs::path(path.string() + ".meta.json"), meta);
}

json cmd_init_vectors(const ExperimentConfig& cfg) {
  prepare_out_dir(cfg);
  const Artifacts a(cfg);
  const std::string hash = cfg.hash();
  const Data data = load_data(cfg);
  const CodeVectorMatrix h =
      cfg.init == "mean" ? per_class_mean_init(data.provider, data.train)
                         : random_code_vectors(data.train.m, data.provider.d(),
                                               stage_seed(cfg, Stage::kRandomInit));
  save_vectors(a.vectors, h, hash, {{"init", cfg.init}});
  write_manifest(a.manifest, data.train, hash);
  return {{"command", "init-vectors"}, {"config_hash", hash}, {"m", h.m()}, {"d", h.d()},
          {"init", cfg.init}, {"output", a.vectors.string()}};
}

json cmd_optimize(const ExperimentConfig& cfg) {
  prepare_out_dir(cfg);
  const Artifacts a(cfg);
  const std::string hash = cfg.hash();
  const auto h0 = load_code_vectors(input_or(cfg.inputs.vectors, a.vectors));
  const auto ucfg = uniformity_config(cfg);
  std::optional<double> first, last;
  const auto h = optimize_code_vectors(h0, ucfg, [&](int, double loss) {
    if (!first) first = loss;
    last = loss;
  });
  save_vectors(a.optimized, h, hash, {{"epochs", cfg.uniformity.epochs}});
  json report = separation_json(separation_metrics(h));
  report["initial"] = separation_json(separation_metrics(h0));
  report["config_hash"] = hash;
  report["batch_loss_first"] = first ? json(*first) : json(nullptr);
  report["batch_loss_last"] = last ? json(*last) : json(nullptr);
  write_json(a.separation, report);
  return {{"command", "optimize"}, {"config_hash", hash}, {"separation", report},
          {"output", a.optimized.string()}};
}

json cmd_tokenize(const ExperimentConfig& cfg) {
  prepare_out_dir(cfg);
  const Artifacts a(cfg);
  const std::string hash = cfg.hash();
  const auto h = load_code_vectors(input_or(cfg.inputs.optimized, a.optimized));
  int l = cfg.tokenizer.l, v = cfg.tokenizer.v;
  bool in_band = true;
  if (l == 0 || v == 0) {
    if (h.m() < 2) {
      l = 1;
      v = 2;
    } else {
      const auto s = suggest_length(h.m());
      l = s.l;
      v = s.v;
      in_band = s.in_band;
    }
  }
  std::vector<IdentityCode> codes;
  std::optional<CodeTree> tree;
  if (cfg.tokenizer.codes == "tree") {
    TokenizerConfig tc;
    tc.l = l;
    tc.v = v;
    tc.seed = stage_seed(cfg, Stage::kTokenizer);
    tc.kmeans_iters = cfg.tokenizer.kmeans_iters;
    tc.restarts = cfg.tokenizer.restarts;
    tree = build_code_tree(h, tc);
    codes = assign_codes(*tree);
  } else {
    codes = random_codes(static_cast<int>(h.m()), l, v, stage_seed(cfg, Stage::kTokenizer));
    tree = CodeTree::from_codes(codes, h, l, v);
  }
  write_codes(a.codes, codes, l, v, hash);
  write_tree(a.tree, a.tree_centroids, *tree, hash);
  write_json(fs::path(a.tree_centroids.string() + ".meta.json"), {{"config_hash", hash}});
  return {{"command", "tokenize"}, {"config_hash", hash}, {"l", l}, {"v", v}, {"m", h.m()},
          {"in_band", in_band}, {"codes", cfg.tokenizer.codes}};
}

json cmd_train(const ExperimentConfig& cfg) {
  prepare_out_dir(cfg);
  const Artifacts a(cfg);
  const std::string hash = cfg.hash();
  const auto h = load_code_vectors(input_or(cfg.inputs.optimized, a.optimized));
  const auto codes_file = read_codes(input_or(cfg.inputs.codes, a.codes));
  const auto tree = read_tree(input_or(cfg.inputs.tree, a.tree));
  if (codes_file.m != h.m() || tree.m() != h.m() || codes_file.l != tree.l() ||
      codes_file.v != tree.v()) {
    std::ostringstream os;
    os << "inconsistent inputs: vectors m=" << h.m() << ", codes (l, v, m)=(" << codes_file.l << ", "
       << codes_file.v << ", " << codes_file.m << "), tree (l, v, m)=(" << tree.l() << ", "
       << tree.v() << ", " << tree.m() << ")";
    throw ConfigError(os.str());
  }
  const Data data = load_data(cfg);
  if (data.train.m != h.m()) {
    throw ConfigError("inconsistent inputs: dataset has " + std::to_string(data.train.m) +
                      " identities, vectors have " + std::to_string(h.m()));
  }

  GifModel model{Backbone({data.train.feature_dim(), cfg.hidden, h.d()},
                          stage_seed(cfg, Stage::kBackbone)),
                 TokenHeads::create(tree.l(), tree.v(), h.d(), cfg.training.scale_s,
                                    stage_seed(cfg, Stage::kHeads))};
  GifLossConfig loss_cfg;
  loss_cfg.gamma_balance = cfg.training.gamma_balance;
  loss_cfg.lambdas = cfg.training.lambdas;
  loss_cfg.validate(tree.l());
  FitConfig fit;
  fit.epochs = cfg.training.epochs;
  fit.batch_size = cfg.training.batch;
  fit.sgd.lr = cfg.training.lr;
  fit.sgd.momentum = cfg.training.momentum;
  fit.seed = stage_seed(cfg, Stage::kFit);

  std::vector<EpochMetrics> epochs;
  {
    MetricsWriter metrics(a.metrics, hash);
    epochs = fit_gif(data.train, model, h, codes_file.codes, loss_cfg, fit,
                     [&](std::int64_t step, const LossBreakdown& lb) { metrics.write(step, lb); });
  }
  Checkpoint ckpt;
  ckpt.config_hash = hash;
  ckpt.backbone = model.backbone;
  ckpt.heads = model.heads;
  write_checkpoint(a.checkpoint, ckpt);

  const auto train_eval = evaluate_gif(data.train.samples, model, h, tree);
  json report{{"config_hash", hash},
              {"l", tree.l()},
              {"v", tree.v()},
              {"m", h.m()},
              {"train_accuracy", train_eval.accuracy},
              {"train_fallback_rate", train_eval.fallback_rate},
              {"mean_alignment", train_eval.mean_alignment}};
  if (!data.test.empty()) {
    const auto test_eval = evaluate_gif(data.test, model, h, tree);
    report["test_accuracy"] = test_eval.accuracy;
    report["test_fallback_rate"] = test_eval.fallback_rate;
    report["test_mean_alignment"] = test_eval.mean_alignment;
  }
  if (!epochs.empty()) report["final_loss"] = epochs.back().loss.total;
  write_json(a.evaluation, report);
  report["command"] = "train";
  return report;
}

json cmd_collapse(const ExperimentConfig& cfg) {
  if (cfg.dataset.source != "synthetic") {
    throw ConfigError("collapse needs a synthetic dataset to control identity counts");
  }
  prepare_out_dir(cfg);
  const Artifacts a(cfg);
  const std::string hash = cfg.hash();
  const auto& d = cfg.dataset;
  const auto& c = cfg.collapse;
  const auto gen = gen_identities(d.m, d.d, d.dispersion, stage_seed(cfg, Stage::kPrototypes),
                                  d.min_separation);
  const auto seed = stage_seed(cfg, Stage::kTrainSamples);
  const auto longtail = sample_longtail(gen, c.head_fraction, c.head_count, c.tail_count, seed);
  const auto balanced = sample_longtail(gen, 1.0, c.head_count, c.head_count, seed);
  const auto lt = collapse_run(cfg, gen, longtail);
  const auto bal = collapse_run(cfg, gen, balanced);
  write_trajectory(a.collapse_longtail, lt.baseline, hash);
  write_trajectory(a.collapse_balanced, bal.baseline, hash);

  const double ratio = final_min(lt.baseline) / final_min(bal.baseline);
  json summary{{"config_hash", hash},
               {"head_identities", head_identities(d.m, c.head_fraction)},
               {"baseline",
                {{"longtail", baseline_summary(lt.baseline)},
                 {"balanced", baseline_summary(bal.baseline)},
                 {"min_ratio", ratio}}},
               {"gif",
                {{"longtail", separation_json(lt.gif)},
                 {"balanced", separation_json(bal.gif)},
                 {"identical", lt.gif.min_dist == bal.gif.min_dist}}}};
  write_json(a.collapse_summary, summary);
  summary["command"] = "collapse";
  return summary;
}

json cmd_cost(const ExperimentConfig& cfg) {
  prepare_out_dir(cfg);
  const Artifacts a(cfg);
  const std::string hash = cfg.hash();
  std::vector<Method> methods;
  for (const auto& m : cfg.cost.methods) methods.push_back(parse_method(m));
  CostOptions opts;
  opts.batch_size = cfg.cost.batch_size;
  const auto rows = scaling_table(cfg.cost.m_list, cfg.cost.d, methods, opts);
  std::ofstream out(a.cost, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + a.cost.string() + " for writing");
  out << "# config_hash=" << hash << '\n';
  write_scaling_csv(out, rows);
  return {{"command", "cost"}, {"config_hash", hash}, {"rows", rows.size()},
          {"output", a.cost.string()}};
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Generative identity codes: vector init, optimization, tokenization, training"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  app.add_option("--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "master seed");
  app.add_option("--out-dir", out_dir, "output directory");
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

  std::string init;
  std::optional<double> gamma;
  std::string codes_mode;
  auto* init_cmd = app.add_subcommand("init-vectors", "per-class mean or random code vectors");
  init_cmd->add_option("--init", init, "mean or random")->check(CLI::IsMember({"mean", "random"}));
  auto* opt_cmd = app.add_subcommand("optimize", "spread code vectors on the sphere");
  auto* tok_cmd = app.add_subcommand("tokenize", "hierarchical codes and tree");
  tok_cmd->add_option("--codes", codes_mode, "tree or random")
      ->check(CLI::IsMember({"tree", "random"}));
  auto* train_cmd = app.add_subcommand("train", "train backbone and token heads");
  train_cmd->add_option("--gamma-balance", gamma, "weight of the alignment loss");
  auto* collapse_cmd = app.add_subcommand("collapse", "baseline vs code-vector separation");
  auto* cost_cmd = app.add_subcommand("cost", "classifier scaling table");

  try {
    std::vector<std::string> args;
    for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : ExperimentConfig::load(config_path);
    if (seed) cfg.seed = *seed;
    if (const char* env = std::getenv("GIF_OUT_DIR"); env && *env) cfg.out_dir = env;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (const char* env = std::getenv("GIF_THREADS"); env && *env) {
      try {
        cfg.threads = std::stoi(env);
      } catch (const std::exception&) {
        throw ConfigError("GIF_THREADS must be an integer");
      }
    }
    if (threads) cfg.threads = *threads;
    if (!init.empty()) cfg.init = init;
    if (!codes_mode.empty()) cfg.tokenizer.codes = codes_mode;
    if (gamma) cfg.training.gamma_balance = *gamma;
    cfg.validate();

    json summary;
    if (init_cmd->parsed()) summary = cmd_init_vectors(cfg);
    else if (opt_cmd->parsed()) summary = cmd_optimize(cfg);
    else if (tok_cmd->parsed()) summary = cmd_tokenize(cfg);
    else if (train_cmd->parsed()) summary = cmd_train(cfg);
    else if (collapse_cmd->parsed()) summary = cmd_collapse(cfg);
    else summary = cmd_cost(cfg);
    (void)cost_cmd;
    out << summary.dump() << '\n';
    return 0;
  } catch (const NumericError& e) {
    err << "numeric abort: " << e.what() << '\n';
    return 3;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "input error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace gif::app
