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

#include "gif/gif_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "gif/error.hpp"

namespace gif {
namespace {

struct Softmax {
  Vector probs;
  double log_norm = 0.0;  // log sum exp(logits)
};

Softmax softmax(const Vector& logits) {
  const double mx = logits.maxCoeff();
  const Vector e = (logits.array() - mx).exp().matrix();
  const double sum = e.sum();
  return {e / sum, mx + std::log(sum)};
}

int argmax_lowest(const Vector& p) {
  int best = 0;
  for (Index k = 1; k < p.size(); ++k) {
    if (p[k] > p[best]) best = static_cast<int>(k);
  }
  return best;
}

struct HeadForward {
  Mlp::Cache cache;
  Normalized projected;
  Softmax soft;
};

HeadForward head_forward(const TokenHeads& heads, int j, const Vector& z, bool with_cache) {
  HeadForward f;
  const Mlp& net = heads.projections[static_cast<std::size_t>(j)];
  const Vector q = with_cache ? net.forward(z, f.cache) : net.forward(z);
  f.projected = normalize_or_zero(q);
  const Vector logits =
      heads.scale_s * (heads.classifiers[static_cast<std::size_t>(j)].transpose() * f.projected.y);
  f.soft = softmax(logits);
  return f;
}

const IdentityCode& code_for(std::span<const IdentityCode> codes, const CodeVectorMatrix& h,
                             int label, int l) {
  if (label < 0 || static_cast<std::size_t>(label) >= codes.size() || label >= h.m()) {
    throw RangeError("label " + std::to_string(label) + " has no code or code vector");
  }
  const auto& code = codes[static_cast<std::size_t>(label)];
  if (static_cast<int>(code.tokens.size()) != l) {
    throw DimensionError("code of label " + std::to_string(label) + " has the wrong length");
  }
  return code;
}

std::string describe_batch(std::span<const Sample> batch) {
  std::ostringstream os;
  os << "batch of " << batch.size() << " samples, ids [";
  for (std::size_t i = 0; i < batch.size() && i < 8; ++i) os << (i ? "," : "") << batch[i].id;
  if (batch.size() > 8) os << ",...";
  os << "]";
  return os.str();
}

bool gradients_finite(const GifGradients& g) {
  auto mlp_ok = [](const Mlp& net) {
    for (const auto& layer : net.layers()) {
      if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
    }
    return true;
  };
  if (!mlp_ok(g.backbone)) return false;
  for (const auto& p : g.projections) {
    if (!mlp_ok(p)) return false;
  }
  for (const auto& u : g.classifiers) {
    if (!u.allFinite()) return false;
  }
  return true;
}

}  // namespace

TokenHeads TokenHeads::create(int l, int v, Index d, double scale_s, std::uint64_t seed) {
  if (l < 1 || v < 2 || d < 2) throw ConfigError("token heads need l >= 1, v >= 2, d >= 2");
  if (!(scale_s >= 0.0)) throw ConfigError("softmax scale must be >= 0");
  TokenHeads heads;
  heads.l = l;
  heads.v = v;
  heads.d = d;
  heads.scale_s = scale_s;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int j = 0; j < l; ++j) {
    heads.projections.emplace_back(std::vector<Index>{d, d, d, d}, rng);
    Matrix u(d, v);
    for (Index r = 0; r < d; ++r) {
      for (Index c = 0; c < v; ++c) u(r, c) = gauss(rng);
    }
    heads.classifiers.push_back(std::move(u));
  }
  heads.renormalize();
  return heads;
}

void TokenHeads::renormalize() {
  for (auto& u : classifiers) {
    for (Index c = 0; c < u.cols(); ++c) {
      const double n = u.col(c).norm();
      if (!std::isfinite(n) || n == 0.0) {
        throw NumericError("classifier column collapsed to zero or non-finite norm");
      }
      u.col(c) /= n;
    }
  }
}

void TokenHeads::validate() const {
  if (static_cast<int>(projections.size()) != l || static_cast<int>(classifiers.size()) != l) {
    throw DimensionError("token heads: expected " + std::to_string(l) + " heads");
  }
  if (!(scale_s >= 0.0)) throw ConfigError("softmax scale must be >= 0");
  for (int j = 0; j < l; ++j) {
    const auto& u = classifiers[static_cast<std::size_t>(j)];
    if (u.rows() != d || u.cols() != v) throw DimensionError("classifier U^j must be d x v");
    if (projections[static_cast<std::size_t>(j)].in() != d ||
        projections[static_cast<std::size_t>(j)].out() != d) {
      throw DimensionError("projection head must map d -> d");
    }
    for (Index c = 0; c < v; ++c) {
      if (std::abs(u.col(c).norm() - 1.0) > kUnitTolerance) {
        throw DegenerateInputError("classifier column is not unit norm");
      }
    }
  }
}

std::size_t TokenHeads::classifier_parameter_count() const {
  return static_cast<std::size_t>(l) * static_cast<std::size_t>(v) * static_cast<std::size_t>(d);
}

std::size_t TokenHeads::projection_parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : projections) n += p.parameter_count();
  return n;
}

std::vector<double> GifLossConfig::weights(int l) const {
  validate(l);
  if (lambdas.empty()) return std::vector<double>(static_cast<std::size_t>(l), 1.0 / l);
  const double sum = std::accumulate(lambdas.begin(), lambdas.end(), 0.0);
  std::vector<double> w = lambdas;
  for (double& x : w) x /= sum;
  return w;
}

void GifLossConfig::validate(int l) const {
  if (!(gamma_balance >= 0.0)) throw ConfigError("gamma_balance must be >= 0");
  if (lambdas.empty()) return;
  if (static_cast<int>(lambdas.size()) != l) {
    throw ConfigError("expected " + std::to_string(l) + " token weights, got " +
                      std::to_string(lambdas.size()));
  }
  double sum = 0.0;
  for (double x : lambdas) {
    if (!(x >= 0.0)) throw ConfigError("token weights must be >= 0");
    sum += x;
  }
  if (!(sum > 0.0)) throw ConfigError("token weights must not all be zero");
}

std::vector<Vector> token_probabilities(const UnitVector& z, const TokenHeads& heads) {
  if (z.dim() != heads.d) throw DimensionError("embedding dimension differs from heads");
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(heads.l));
  for (int j = 0; j < heads.l; ++j) out.push_back(head_forward(heads, j, z.values(), false).soft.probs);
  return out;
}

double loss_code(const UnitVector& z, const TokenHeads& heads, const IdentityCode& code,
                 const GifLossConfig& cfg) {
  if (static_cast<int>(code.tokens.size()) != heads.l) {
    throw DimensionError("code length differs from number of heads");
  }
  const auto w = cfg.weights(heads.l);
  double loss = 0.0;
  for (int j = 0; j < heads.l; ++j) {
    const int c = code.tokens[static_cast<std::size_t>(j)];
    if (c < 0 || c >= heads.v) throw RangeError("token " + std::to_string(c) + " outside [0, v)");
    const auto f = head_forward(heads, j, z.values(), false);
    const double logit = heads.scale_s *
                         heads.classifiers[static_cast<std::size_t>(j)].col(c).dot(f.projected.y);
    loss += w[static_cast<std::size_t>(j)] * (f.soft.log_norm - logit);
  }
  return loss;
}

double loss_ar(const UnitVector& z, const UnitVector& h) {
  if (z.dim() != h.dim()) throw DimensionError("loss_ar: dimension mismatch");
  const double a = z.values().dot(h.values()) - 1.0;
  return 0.5 * a * a;
}

Vector grad_ar(const UnitVector& z, const UnitVector& h) {
  if (z.dim() != h.dim()) throw DimensionError("grad_ar: dimension mismatch");
  return (z.values().dot(h.values()) - 1.0) * h.values();
}

GifGradients GifGradients::zeros_like(const GifModel& model) {
  GifGradients g;
  g.backbone = model.backbone.net().zeros_like();
  for (const auto& p : model.heads.projections) g.projections.push_back(p.zeros_like());
  for (const auto& u : model.heads.classifiers) g.classifiers.push_back(Matrix::Zero(u.rows(), u.cols()));
  return g;
}

void GifGradients::set_zero() {
  for_each_block(backbone, [](Eigen::Map<Vector> b) { b.setZero(); });
  for (auto& p : projections) for_each_block(p, [](Eigen::Map<Vector> b) { b.setZero(); });
  for (auto& u : classifiers) u.setZero();
}

LossBreakdown loss_and_gradients(std::span<const Sample> batch, const GifModel& model,
                                 const CodeVectorMatrix& h, std::span<const IdentityCode> codes,
                                 const GifLossConfig& cfg, GifGradients* grad) {
  const TokenHeads& heads = model.heads;
  if (batch.empty()) throw ConfigError("empty batch");
  if (h.d() != heads.d || model.backbone.d() != heads.d) {
    throw DimensionError("backbone, heads and code vectors must share d");
  }
  const auto w = cfg.weights(heads.l);
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  LossBreakdown out;
  out.token_acc.assign(static_cast<std::size_t>(heads.l), 0.0);
  for (const auto& s : batch) {
    const IdentityCode& code = code_for(codes, h, s.label, heads.l);
    Mlp::Cache bcache;
    const Normalized zn = normalize_with_norm(model.backbone.net().forward(s.x, bcache));
    const Vector& z = zn.y;
    Vector grad_z = Vector::Zero(z.size());

    for (int j = 0; j < heads.l; ++j) {
      const int c = code.tokens[static_cast<std::size_t>(j)];
      if (c < 0 || c >= heads.v) throw RangeError("token " + std::to_string(c) + " outside [0, v)");
      const auto ju = static_cast<std::size_t>(j);
      const HeadForward f = head_forward(heads, j, z, grad != nullptr);
      const Matrix& u = heads.classifiers[ju];
      const double logit = heads.scale_s * u.col(c).dot(f.projected.y);
      out.l_c += inv_n * w[ju] * (f.soft.log_norm - logit);
      if (argmax_lowest(f.soft.probs) == c) out.token_acc[ju] += inv_n;
      if (grad == nullptr) continue;

      Vector dlogits = f.soft.probs;
      dlogits[c] -= 1.0;
      dlogits *= w[ju] * inv_n;
      grad->classifiers[ju].noalias() += heads.scale_s * f.projected.y * dlogits.transpose();
      const Vector d_proj = heads.scale_s * (u * dlogits);
      const Vector d_q = normalize_backward(f.projected, d_proj);
      grad_z += heads.projections[ju].backward(f.cache, d_q, grad->projections[ju]);
    }

    const Vector hy = h.row(s.label).transpose();
    const double cos = z.dot(hy);
    out.l_ar += inv_n * 0.5 * (cos - 1.0) * (cos - 1.0);
    out.mean_alignment += inv_n * cos;
    if (grad == nullptr) continue;
    grad_z += cfg.gamma_balance * inv_n * (cos - 1.0) * hy;
    model.backbone.net().backward(bcache, normalize_backward(zn, grad_z), grad->backbone);
  }
  out.total = out.l_c + cfg.gamma_balance * out.l_ar;
  return out;
}

double loss_total(std::span<const Sample> batch, const Backbone& backbone,
                  const TokenHeads& heads, const CodeVectorMatrix& h,
                  std::span<const IdentityCode> codes, const GifLossConfig& cfg) {
  GifModel view{backbone, heads};
  return loss_and_gradients(batch, view, h, codes, cfg, nullptr).total;
}

LossBreakdown train_step(std::span<const Sample> batch, GifModel& model,
                         const CodeVectorMatrix& h, std::span<const IdentityCode> codes,
                         const GifLossConfig& cfg, const SgdConfig& sgd, SgdState& state) {
  GifGradients grad = GifGradients::zeros_like(model);
  LossBreakdown loss;
  try {
    loss = loss_and_gradients(batch, model, h, codes, cfg, &grad);
  } catch (const NumericError& e) {
    throw NumericError(std::string(e.what()) + " on " + describe_batch(batch));
  }
  if (!std::isfinite(loss.total) || !gradients_finite(grad)) {
    std::ostringstream msg;
    msg << "non-finite loss or gradient (loss=" << loss.total << ", l_c=" << loss.l_c
        << ", l_ar=" << loss.l_ar << ") on " << describe_batch(batch);
    throw NumericError(msg.str());
  }
  if (!state.velocity) state.velocity = GifGradients::zeros_like(model);
  GifGradients& vel = *state.velocity;

  auto step = [&](Eigen::Map<Vector> param, Eigen::Map<Vector> v, const Eigen::Map<Vector>& g) {
    v = sgd.momentum * v + g;
    param -= sgd.lr * v;
  };
  auto step_mlp = [&](Mlp& param, Mlp& v, Mlp& g) {
    for (std::size_t k = 0; k < param.layers().size(); ++k) {
      auto& lp = param.layers()[k];
      auto& lv = v.layers()[k];
      auto& lg = g.layers()[k];
      step(Eigen::Map<Vector>(lp.weight.data(), lp.weight.size()),
           Eigen::Map<Vector>(lv.weight.data(), lv.weight.size()),
           Eigen::Map<Vector>(lg.weight.data(), lg.weight.size()));
      step(Eigen::Map<Vector>(lp.bias.data(), lp.bias.size()),
           Eigen::Map<Vector>(lv.bias.data(), lv.bias.size()),
           Eigen::Map<Vector>(lg.bias.data(), lg.bias.size()));
    }
  };
  step_mlp(model.backbone.net(), vel.backbone, grad.backbone);
  for (int j = 0; j < model.heads.l; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    step_mlp(model.heads.projections[ju], vel.projections[ju], grad.projections[ju]);
    auto& u = model.heads.classifiers[ju];
    step(Eigen::Map<Vector>(u.data(), u.size()),
         Eigen::Map<Vector>(vel.classifiers[ju].data(), vel.classifiers[ju].size()),
         Eigen::Map<Vector>(grad.classifiers[ju].data(), grad.classifiers[ju].size()));
  }
  model.heads.renormalize();
  return loss;
}

Prediction predict_identity(const UnitVector& z, const TokenHeads& heads, const CodeTree& tree,
                            std::span<const IdentityCode> codes) {
  if (tree.l() != heads.l || tree.v() != heads.v) {
    throw DimensionError("tree (l, v) differs from token heads");
  }
  const auto probs = token_probabilities(z, heads);
  Prediction pred;
  for (const auto& p : probs) pred.tokens.push_back(argmax_lowest(p));
  if (const auto id = decode(pred.tokens, tree)) {
    pred.identity = *id;
    return pred;
  }
  pred.fallback = true;
  std::vector<Vector> logp;
  for (const auto& p : probs) logp.push_back(p.array().max(std::numeric_limits<double>::min()).log().matrix());
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& code : codes) {
    double score = 0.0;
    for (int j = 0; j < heads.l; ++j) {
      score += logp[static_cast<std::size_t>(j)][code.tokens[static_cast<std::size_t>(j)]];
    }
    if (score > best || (score == best && code.identity < pred.identity)) {
      best = score;
      pred.identity = code.identity;
    }
  }
  return pred;
}

Prediction predict_identity(const UnitVector& z, const TokenHeads& heads, const CodeTree& tree) {
  const auto codes = assign_codes(tree);
  return predict_identity(z, heads, tree, codes);
}

std::vector<EpochMetrics> fit_gif(const LongTailDataset& dataset, GifModel& model,
                                  const CodeVectorMatrix& h, std::span<const IdentityCode> codes,
                                  const GifLossConfig& loss_cfg, const FitConfig& cfg,
                                  const StepCallback& on_step) {
  if (cfg.batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (cfg.epochs < 0) throw ConfigError("epochs must be >= 0");
  std::mt19937_64 rng(cfg.seed);
  std::vector<Sample> order = dataset.samples;
  SgdState state;
  std::vector<EpochMetrics> history;
  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochMetrics em;
    em.epoch = epoch;
    em.loss.token_acc.assign(static_cast<std::size_t>(model.heads.l), 0.0);
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), order.size() - start);
      const std::span<const Sample> batch(order.data() + start, len);
      const LossBreakdown lb = train_step(batch, model, h, codes, loss_cfg, cfg.sgd, state);
      if (on_step) on_step(step, lb);
      ++step;
      ++batches;
      em.loss.total += lb.total;
      em.loss.l_c += lb.l_c;
      em.loss.l_ar += lb.l_ar;
      em.loss.mean_alignment += lb.mean_alignment;
      for (std::size_t j = 0; j < lb.token_acc.size(); ++j) em.loss.token_acc[j] += lb.token_acc[j];
    }
    if (batches > 0) {
      const double inv = 1.0 / batches;
      em.loss.total *= inv;
      em.loss.l_c *= inv;
      em.loss.l_ar *= inv;
      em.loss.mean_alignment *= inv;
      for (double& a : em.loss.token_acc) a *= inv;
    }
    em.step = step;
    history.push_back(std::move(em));
  }
  return history;
}

EvalResult evaluate_gif(std::span<const Sample> samples, const GifModel& model,
                        const CodeVectorMatrix& h, const CodeTree& tree) {
  EvalResult r;
  if (samples.empty()) return r;
  const auto codes = assign_codes(tree);
  for (const auto& s : samples) {
    const UnitVector z(model.backbone.embed(s.x));
    const Prediction p = predict_identity(z, model.heads, tree, codes);
    if (p.identity == s.label) r.accuracy += 1.0;
    if (p.fallback) r.fallback_rate += 1.0;
    if (s.label >= 0 && s.label < h.m()) r.mean_alignment += z.values().dot(h.row(s.label).transpose());
  }
  const double inv = 1.0 / static_cast<double>(samples.size());
  r.accuracy *= inv;
  r.fallback_rate *= inv;
  r.mean_alignment *= inv;
  return r;
}

}  // namespace gif
