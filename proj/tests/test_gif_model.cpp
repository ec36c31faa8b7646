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

#include <cmath>
#include <numeric>

#include "doctest.h"
#include "gif/baseline_ce.hpp"
#include "gif/error.hpp"
#include "gif/gif_model.hpp"
#include "model_fixtures.hpp"
#include "support.hpp"

using namespace gif;
using gif::test::Gen;

namespace {

/// Heads whose projection MLPs are identity maps on the positive orthant.
TokenHeads identity_heads(int l, int v, Index d, double scale) {
  TokenHeads heads = TokenHeads::create(l, v, d, scale, 1);
  for (auto& p : heads.projections) {
    for (auto& layer : p.layers()) {
      layer.weight = Matrix::Identity(d, d);
      layer.bias.setZero();
    }
  }
  return heads;
}

/// Per-sample loss by direct evaluation of every term.
double oracle_sample_loss(const Sample& s, const Backbone& bb, const TokenHeads& heads, const CodeVectorMatrix& h,
                          const IdentityCode& code, const std::vector<double>& lambda, double gamma) {
  const Vector raw = bb.net().forward(s.x);
  const Vector z = raw / raw.norm();
  double lc = 0.0;
  for (int j = 0; j < heads.l; ++j) {
    const Vector q = heads.projections[static_cast<std::size_t>(j)].forward(z);
    const Vector qn = q.norm() > 0 ? Vector(q / q.norm()) : Vector(Vector::Zero(q.size()));
    double denom = 0.0;
    for (int k = 0; k < heads.v; ++k) {
      denom += std::exp(heads.scale_s * heads.classifiers[static_cast<std::size_t>(j)].col(k).dot(qn));
    }
    const double target =
        std::exp(heads.scale_s * heads.classifiers[static_cast<std::size_t>(j)].col(code.tokens[static_cast<std::size_t>(j)]).dot(qn));
    lc += lambda[static_cast<std::size_t>(j)] * -std::log(target / denom);
  }
  const double c = z.dot(h.row(s.label));
  return lc + gamma * 0.5 * (c - 1.0) * (c - 1.0);
}

}  // namespace

TEST_SUITE("gif_model") {

TEST_CASE("token distributions are valid and uniform at zero scale") {
  Gen g(1);
  for (int rep = 0; rep < 50; ++rep) {
    const int l = g.integer(1, 3), v = g.integer(2, 9);
    const Index d = g.integer(2, 8);
    const auto heads = TokenHeads::create(l, v, d, g.real(0, 30), static_cast<std::uint64_t>(rep));
    for (const auto& p : token_probabilities(UnitVector(g.unit(d)), heads)) {
      CHECK(p.minCoeff() >= 0.0);
      CHECK(std::abs(p.sum() - 1.0) < 1e-6);
    }
  }
  const auto flat = TokenHeads::create(2, 5, 4, 0.0, 3);
  for (const auto& p : token_probabilities(UnitVector(g.unit(4)), flat)) {
    for (Index k = 0; k < 5; ++k) CHECK(p[k] == doctest::Approx(0.2).epsilon(1e-14));
  }
}

TEST_CASE("two-way token softmax with orthogonal columns") {
  const Index d = 3;
  const double s = 5.0;
  TokenHeads heads = identity_heads(1, 2, d, s);
  Vector z(d);
  z << 0.2, 0.5, 0.7;
  z.normalize();
  Vector u1(d);
  u1 << 1, -1, 0.5;
  u1 -= u1.dot(z) * z;
  heads.classifiers[0].col(0) = z;
  heads.classifiers[0].col(1) = u1.normalized();
  const auto p = token_probabilities(UnitVector(z), heads);
  CHECK(p[0][0] == doctest::Approx(std::exp(s) / (std::exp(s) + 1.0)).epsilon(1e-12));
}

TEST_CASE("code loss examples") {
  Gen g(2);
  const auto flat = TokenHeads::create(3, 7, 5, 0.0, 4);
  const IdentityCode code{0, {1, 6, 0}};
  const UnitVector z(g.unit(5));
  CHECK(loss_code(z, flat, code, {}) == doctest::Approx(std::log(7.0)).epsilon(1e-12));

  const auto heads = TokenHeads::create(3, 7, 5, 16.0, 5);
  GifLossConfig a, b;
  a.lambdas = {0.2, 0.3, 0.5};
  b.lambdas = {0.4, 0.6, 1.0};
  CHECK(loss_code(z, heads, code, a) == doctest::Approx(loss_code(z, heads, code, b)).epsilon(1e-14));
  CHECK(loss_code(z, heads, code, {}) >= 0.0);

  const IdentityCode bad{0, {1, 7, 0}};
  CHECK_THROWS_AS(loss_code(z, heads, bad, {}), RangeError);
  const IdentityCode shorter{0, {1, 2}};
  CHECK_THROWS_AS(loss_code(z, heads, shorter, {}), DimensionError);
  a.lambdas = {1.0, -1.0, 1.0};
  CHECK_THROWS_AS(loss_code(z, heads, code, a), ConfigError);
}

TEST_CASE("single-token code with v = m is the centroid cross-entropy") {
  Gen g(3);
  for (int rep = 0; rep < 30; ++rep) {
    const int m = g.integer(2, 20);
    const Index d = g.integer(2, 8);
    const auto heads = TokenHeads::create(1, m, d, g.real(1, 30), static_cast<std::uint64_t>(rep));
    const UnitVector z(g.unit(d));
    const int y = g.integer(0, m - 1);
    CentroidMatrix w;
    w.w = heads.classifiers[0];
    w.scale_s = heads.scale_s;
    const Vector q = heads.projections[0].forward(z.values());
    if (q.norm() == 0.0) continue;
    const UnitVector zp(q);
    CHECK(loss_code(z, heads, {y, {y}}, {}) == doctest::Approx(ce_forward(zp, w, y).loss).epsilon(1e-12));
  }
}

TEST_CASE("angular regression examples") {
  Vector e0(3), e1(3);
  e0 << 1, 0, 0;
  e1 << 0, 1, 0;
  const UnitVector a(e0), b(e1), na(Vector(-e0));
  CHECK(loss_ar(a, a) == 0.0);
  CHECK(loss_ar(a, b) == doctest::Approx(0.5));
  CHECK(loss_ar(na, a) == doctest::Approx(2.0));
  CHECK(grad_ar(a, a).norm() == 0.0);
  CHECK((grad_ar(a, b) + e1).norm() < 1e-15);
}

TEST_CASE("angular regression gradient and bounds") {
  Gen g(4);
  for (int rep = 0; rep < 100; ++rep) {
    const Index d = g.integer(2, 8);
    const Vector z = g.unit(d), hv = g.unit(d);
    const UnitVector h(hv);
    // L_AR as a function of an unconstrained z.
    auto f = [&](const Matrix& x) {
      const double c = x.col(0).dot(hv) - 1.0;
      return 0.5 * c * c;
    };
    const Matrix numeric = test::central_diff(z, f);
    CHECK(test::rel_err(grad_ar(UnitVector(z), h), numeric) < 1e-5);
    const double v = loss_ar(UnitVector(z), h);
    CHECK(v >= 0.0);
    CHECK(v <= 2.0);
  }
}

TEST_CASE("total loss matches a per-sample oracle") {
  Gen g(5);
  for (int rep = 0; rep < 30; ++rep) {
    const int m = g.integer(2, 12), l = g.integer(1, 3);
    int v = 2;
    while (vocabulary_size(v, l) < m) ++v;
    auto p = test::random_problem(g, m, l, v, g.integer(2, 6), g.integer(2, 6), g.integer(1, 8), g.real(1, 20));
    if (test::has_dead_output(p)) continue;
    GifLossConfig cfg;
    cfg.gamma_balance = g.real(0, 2);
    const auto lambda = cfg.weights(l);
    double expect = 0.0;
    for (const auto& s : p.batch) {
      expect += oracle_sample_loss(s, p.model.backbone, p.model.heads, p.h, p.codes[static_cast<std::size_t>(s.label)],
                                   lambda, cfg.gamma_balance);
    }
    expect /= static_cast<double>(p.batch.size());
    CHECK(loss_total(p.batch, p.model.backbone, p.model.heads, p.h, p.codes, cfg) ==
          doctest::Approx(expect).epsilon(1e-10));

    GifLossConfig lc_only = cfg;
    lc_only.gamma_balance = 0.0;
    const auto parts = loss_and_gradients(p.batch, p.model, p.h, p.codes, lc_only, nullptr);
    CHECK(parts.total == doctest::Approx(parts.l_c).epsilon(1e-15));
  }
}

TEST_CASE("total loss names a label without a code") {
  Gen g(6);
  auto p = test::random_problem(g, 4, 1, 4, 3, 3, 2, 8.0);
  p.batch[1].label = 9;
  try {
    (void)loss_total(p.batch, p.model.backbone, p.model.heads, p.h, p.codes, {});
    FAIL("expected RangeError");
  } catch (const RangeError& e) {
    CHECK(std::string(e.what()).find('9') != std::string::npos);
  }
}

TEST_CASE("confident correct prediction drives the loss to zero") {
  const Index d = 3;
  TokenHeads heads = identity_heads(2, 2, d, 200.0);
  Vector z(d);
  z << 0.3, 0.4, 0.5;
  z.normalize();
  for (auto& u : heads.classifiers) {
    u.col(0) = z;
    u.col(1) = -z;
  }
  Backbone bb({d, d}, 1);
  bb.net().layers()[0].weight = Matrix::Identity(d, d);
  bb.net().layers()[0].bias.setZero();
  Matrix rows(2, d);
  rows.row(0) = z.transpose();
  rows.row(1) = -z.transpose();
  const auto h = CodeVectorMatrix::from_unit_rows(rows);
  const std::vector<IdentityCode> codes{{0, {0, 0}}, {1, {1, 1}}};
  const std::vector<Sample> batch{{0, 0, z}};
  CHECK(loss_total(batch, bb, heads, h, codes, {}) < 1e-12);
}

TEST_CASE("analytic gradients match central differences") {
  Gen g(7);
  int instances = 0;
  for (int rep = 0; rep < 1000 && instances < 60; ++rep) {
    const int m = g.integer(2, 32), l = g.integer(1, 3);
    int v = g.integer(2, 6);
    while (vocabulary_size(v, l) < m) ++v;
    auto p = test::random_problem(g, m, l, v, g.integer(2, 8), g.integer(2, 8), g.integer(1, 6), g.real(1, 16));
    if (test::has_dead_output(p)) continue;
    GifLossConfig cfg;
    cfg.gamma_balance = g.real(0, 2);
    GifGradients grad = GifGradients::zeros_like(p.model);
    (void)loss_and_gradients(p.batch, p.model, p.h, p.codes, cfg, &grad);

    auto params = test::blocks(p.model);
    auto grads = test::blocks(grad);
    REQUIRE(params.size() == grads.size());
    std::vector<double> analytic, numeric;
    for (std::size_t b = 0; b < params.size(); ++b) {
      for (int probe = 0; probe < 3; ++probe) {
        const Index k = g.integer(0, static_cast<int>(params[b].size()) - 1);
        const double keep = params[b][k];
        const double step = 1e-6;
        params[b][k] = keep + step;
        const double up = loss_and_gradients(p.batch, p.model, p.h, p.codes, cfg, nullptr).total;
        params[b][k] = keep - step;
        const double down = loss_and_gradients(p.batch, p.model, p.h, p.codes, cfg, nullptr).total;
        params[b][k] = keep;
        analytic.push_back(grads[b][k]);
        numeric.push_back((up - down) / (2 * step));
      }
    }
    const Eigen::Map<Vector> a(analytic.data(), static_cast<Index>(analytic.size()));
    const Eigen::Map<Vector> n(numeric.data(), static_cast<Index>(numeric.size()));
    CHECK(test::rel_err(Matrix(a), Matrix(n)) < 1e-4);
    ++instances;
  }
  CHECK(instances >= 50);
}

TEST_CASE("training lowers the loss and leaves code vectors untouched") {
  const auto gen = gen_identities(8, 6, 200.0, 1, 0.3);
  const auto ds = sample_longtail(gen, 1.0, 4, 4, 2);
  const auto h = CodeVectorMatrix::from_unit_rows(test::Gen(3).unit_rows(8, 6));
  const auto codes = random_codes(8, 2, 3, 4);
  const Matrix h_before = h.rows();
  const auto codes_before = codes;
  GifModel model{Backbone({6, 12, 6}, 5), TokenHeads::create(2, 3, 6, 16.0, 6)};
  SgdConfig sgd;
  sgd.lr = 0.05;
  SgdState state;
  const double first = loss_total(ds.samples, model.backbone, model.heads, h, codes, {});
  for (int step = 0; step < 100; ++step) {
    const auto lb = train_step(ds.samples, model, h, codes, {}, sgd, state);
    CHECK(lb.token_acc.size() == 2);
  }
  const double last = loss_total(ds.samples, model.backbone, model.heads, h, codes, {});
  CHECK(last < first);
  CHECK(h.rows() == h_before);
  CHECK(codes == codes_before);
  CHECK_NOTHROW(model.heads.validate());
  for (const auto& s : ds.samples) CHECK(std::abs(model.backbone.embed(s.x).norm() - 1.0) < 1e-6);
}

TEST_CASE("train step aborts on non-finite loss with batch details") {
  Gen g(8);
  auto p = test::random_problem(g, 4, 1, 4, 3, 3, 2, 8.0);
  p.batch[0].x[0] = std::numeric_limits<double>::quiet_NaN();
  SgdState state;
  try {
    (void)train_step(p.batch, p.model, p.h, p.codes, {}, {}, state);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("batch") != std::string::npos);
  }
}

TEST_CASE("prediction tie-break and fallback") {
  Gen g(9);
  const auto h = CodeVectorMatrix::from_unit_rows(g.unit_rows(5, 4));
  const auto tree = build_code_tree(h, {2, 3, 0});
  const auto flat = TokenHeads::create(2, 3, 4, 0.0, 1);
  const auto codes = assign_codes(tree);
  const auto pred = predict_identity(UnitVector(g.unit(4)), flat, tree);
  CHECK(pred.tokens == std::vector<int>{0, 0});
  const auto direct = decode(pred.tokens, tree);
  CHECK(pred.fallback == !direct.has_value());
  if (direct) CHECK(pred.identity == *direct);
  else CHECK(pred.identity == 0);

  // Point every classifier at an unpopulated path.
  std::vector<int> empty_path;
  for (int a = 0; a < 3 && empty_path.empty(); ++a)
    for (int b = 0; b < 3 && empty_path.empty(); ++b)
      if (!decode(std::vector<int>{a, b}, tree)) empty_path = {a, b};
  REQUIRE_FALSE(empty_path.empty());
  TokenHeads sharp = identity_heads(2, 3, 4, 30.0);
  Vector z(4);
  z << 0.1, 0.2, 0.3, 0.9;
  z.normalize();
  for (int j = 0; j < 2; ++j) {
    auto& u = sharp.classifiers[static_cast<std::size_t>(j)];
    for (int k = 0; k < 3; ++k) {
      Vector col = g.unit(4);
      col -= col.dot(z) * z;
      u.col(k) = col.normalized();
    }
    u.col(empty_path[static_cast<std::size_t>(j)]) = z;
  }
  const auto fb = predict_identity(UnitVector(z), sharp, tree);
  CHECK(fb.fallback);
  CHECK(fb.tokens == empty_path);
  CHECK(fb.identity >= 0);
  CHECK(fb.identity < 5);
  // The fallback is the populated code with the highest summed log-probability.
  const auto probs = token_probabilities(UnitVector(z), sharp);
  double best = -1e300;
  int best_id = -1;
  for (const auto& c : codes) {
    const double score = std::log(probs[0][c.tokens[0]]) + std::log(probs[1][c.tokens[1]]);
    if (score > best) {
      best = score;
      best_id = c.identity;
    }
  }
  CHECK(fb.identity == best_id);
}

TEST_CASE("trained model predicts its own training samples") {
  const auto gen = gen_identities(16, 8, 500.0, 2, 0.5);
  const auto ds = sample_longtail(gen, 1.0, 8, 8, 3);
  const auto h = per_class_mean_init(EmbeddingProvider::from_dataset(ds), ds);
  const auto tree = build_code_tree(h, {2, 4, 1});
  const auto codes = assign_codes(tree);
  GifModel model{Backbone({8, 16, 8}, 4), TokenHeads::create(2, 4, 8, 16.0, 5)};
  FitConfig fc;
  fc.epochs = 40;
  fc.batch_size = 16;
  fc.sgd.lr = 0.01;
  std::int64_t steps = 0;
  const auto hist = fit_gif(ds, model, h, codes, {}, fc, [&](std::int64_t, const LossBreakdown&) { ++steps; });
  CHECK(hist.size() == 40);
  CHECK(steps == 40 * 8);
  CHECK(hist.back().loss.total < hist.front().loss.total);
  const auto ev = evaluate_gif(ds.samples, model, h, tree);
  CHECK(ev.accuracy == 1.0);
  const auto pred = predict_identity(UnitVector(model.backbone.embed(ds.samples[0].x)), model.heads, tree);
  CHECK(pred.identity == ds.samples[0].label);
  CHECK_FALSE(pred.fallback);
}

TEST_CASE("fit is deterministic for a seed") {
  const auto gen = gen_identities(6, 4, 100.0, 7);
  const auto ds = sample_longtail(gen, 1.0, 5, 5, 8);
  const auto h = CodeVectorMatrix::from_unit_rows(Gen(9).unit_rows(6, 4));
  const auto codes = random_codes(6, 2, 3, 10);
  FitConfig fc;
  fc.epochs = 3;
  fc.batch_size = 7;
  GifModel a{Backbone({4, 8, 4}, 11), TokenHeads::create(2, 3, 4, 16.0, 12)};
  GifModel b = a;
  const auto ha = fit_gif(ds, a, h, codes, {}, fc);
  const auto hb = fit_gif(ds, b, h, codes, {}, fc);
  CHECK(ha.back().loss.total == hb.back().loss.total);
  CHECK(a.heads.classifiers[1] == b.heads.classifiers[1]);
  CHECK(a.backbone.net().layers()[0].weight == b.backbone.net().layers()[0].weight);
}

TEST_CASE("loss config weights") {
  GifLossConfig c;
  const auto w = c.weights(4);
  for (double x : w) CHECK(x == 0.25);
  c.lambdas = {1, 3};
  CHECK(c.weights(2)[1] == doctest::Approx(0.75));
  CHECK_THROWS_AS(c.weights(3), ConfigError);
  c.lambdas = {0, 0};
  CHECK_THROWS_AS(c.weights(2), ConfigError);
  c = {};
  c.gamma_balance = -1;
  CHECK_THROWS_AS(c.validate(1), ConfigError);
}

TEST_CASE("token heads shapes and parameter counts") {
  const auto heads = TokenHeads::create(3, 10, 8, 16.0, 1);
  CHECK(heads.classifier_parameter_count() == 240);
  CHECK(heads.projection_parameter_count() == 3 * 3 * (64 + 8));
  CHECK_NOTHROW(heads.validate());
  auto broken = heads;
  broken.classifiers[1](0, 0) += 0.5;
  CHECK_THROWS_AS(broken.validate(), DegenerateInputError);
  CHECK_THROWS_AS(TokenHeads::create(0, 10, 8, 16.0, 1), ConfigError);
}

}  // TEST_SUITE
