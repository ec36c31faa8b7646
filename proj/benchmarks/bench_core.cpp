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

#include <benchmark/benchmark.h>

#include <numeric>

#include "gif/gif.hpp"

using namespace gif;

namespace {

void BM_UniformityGrad(benchmark::State& state) {
  const auto m = static_cast<Index>(state.range(0));
  const auto h = random_code_vectors(m, 32, 1);
  UniformityConfig cfg;
  cfg.threads = static_cast<int>(state.range(1));
  std::vector<Index> rows(static_cast<std::size_t>(m));
  std::iota(rows.begin(), rows.end(), Index{0});
  for (auto _ : state) benchmark::DoNotOptimize(uniformity_grad(h, cfg, rows));
  state.SetComplexityN(m);
}
BENCHMARK(BM_UniformityGrad)->Args({64, 1})->Args({256, 1})->Args({1024, 1})->Args({1024, 4})->UseRealTime();

void BM_SphericalKMeans(benchmark::State& state) {
  const auto h = random_code_vectors(state.range(0), 32, 2);
  KMeansConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(spherical_kmeans(h.rows(), 10, cfg));
}
BENCHMARK(BM_SphericalKMeans)->Arg(100)->Arg(1000);

void BM_BuildCodeTree(benchmark::State& state) {
  const auto m = state.range(0);
  const auto h = random_code_vectors(m, 32, 3);
  const auto s = suggest_length(m);
  TokenizerConfig cfg;
  cfg.l = s.l;
  cfg.v = s.v;
  for (auto _ : state) benchmark::DoNotOptimize(build_code_tree(h, cfg));
}
BENCHMARK(BM_BuildCodeTree)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_GifTrainStep(benchmark::State& state) {
  const int m = 1000;
  const Index d = 64;
  const auto gen = gen_identities(m, static_cast<int>(d), 500.0, 4);
  const auto ds = sample_longtail(gen, 1.0, 1, 1, 5);
  const auto h = random_code_vectors(m, d, 6);
  const auto s = suggest_length(m);
  const auto codes = random_codes(m, s.l, s.v, 7);
  GifModel model{Backbone({d, d, d}, 8), TokenHeads::create(s.l, s.v, d, 16.0, 9)};
  const std::span<const Sample> batch(ds.samples.data(), static_cast<std::size_t>(state.range(0)));
  SgdState sgd_state;
  for (auto _ : state) {
    benchmark::DoNotOptimize(train_step(batch, model, h, codes, {}, {0.001, 0.9}, sgd_state));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GifTrainStep)->Arg(64);

void BM_CeGradDecompose(benchmark::State& state) {
  const auto m = state.range(0);
  const Index d = 64;
  const auto w = CentroidMatrix::random(m, d, 16.0, 10);
  const auto z = random_code_vectors(64, d, 11);
  std::vector<FeatureSample> batch;
  for (Index i = 0; i < 64; ++i) batch.push_back({z.rows().row(i).transpose(), static_cast<int>(i % m)});
  for (auto _ : state) benchmark::DoNotOptimize(ce_grad_decompose(batch, w));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_CeGradDecompose)->Arg(1000)->Arg(10000);

void BM_ScalingTable(benchmark::State& state) {
  const std::vector<std::int64_t> ms{1000, 10000, 100000, 1000000, 10000000};
  const std::vector<Method> methods{Method::fc(), Method::subset(0.3), Method::gif()};
  for (auto _ : state) benchmark::DoNotOptimize(scaling_table(ms, 512, methods));
}
BENCHMARK(BM_ScalingTable);

}  // namespace

BENCHMARK_MAIN();
