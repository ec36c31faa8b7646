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

#include "gif/baseline_ce.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "gif/error.hpp"

namespace gif {
namespace {

Vector softmax(const Vector& logits, double* log_norm) {
  const double mx = logits.maxCoeff();
  const Vector e = (logits.array() - mx).exp().matrix();
  const double sum = e.sum();
  if (log_norm) *log_norm = mx + std::log(sum);
  return e / sum;
}

double mean_ratio(const PullPushReport& r, const std::vector<int>& ids) {
  double sum = 0.0;
  int n = 0;
  for (int j : ids) {
    const double x = r.ratio[static_cast<std::size_t>(j)];
    if (!std::isfinite(x)) continue;
    sum += x;
    ++n;
  }
  return n ? sum / n : 0.0;
}

}  // namespace

CentroidMatrix CentroidMatrix::random(Index m, Index d, double scale_s, std::uint64_t seed) {
  CentroidMatrix c;
  c.w = random_code_vectors(m, d, seed).rows().transpose();
  c.scale_s = scale_s;
  return c;
}

void CentroidMatrix::renormalize() {
  for (Index k = 0; k < w.cols(); ++k) {
    const double n = w.col(k).norm();
    if (!std::isfinite(n) || n == 0.0) throw NumericError("centroid collapsed to zero norm");
    w.col(k) /= n;
  }
}

CodeVectorMatrix CentroidMatrix::as_rows() const {
  return CodeVectorMatrix::from_rows(w.transpose(), true);
}

CeResult ce_forward(const UnitVector& z, const CentroidMatrix& w, int label) {
  if (label < 0 || label >= w.m()) {
    throw RangeError("label " + std::to_string(label) + " outside [0, " + std::to_string(w.m()) + ")");
  }
  if (z.dim() != w.d()) throw DimensionError("ce_forward: embedding dimension differs from W");
  const Vector logits = w.scale_s * (w.w.transpose() * z.values());
  double log_norm = 0.0;
  CeResult r;
  r.probs = softmax(logits, &log_norm);
  r.loss = log_norm - logits[label];
  return r;
}

CeGradient ce_grad_decompose(std::span<const FeatureSample> batch, const CentroidMatrix& w) {
  const Index m = w.m(), d = w.d();
  CeGradient g;
  g.pull = Matrix::Zero(d, m);
  g.push = Matrix::Zero(d, m);
  for (const auto& s : batch) {
    if (s.label < 0 || s.label >= m) throw RangeError("label out of range");
    const Vector logits = w.scale_s * (w.w.transpose() * s.z);
    const Vector p = softmax(logits, nullptr);
    // Every non-target column is pushed, the target column is pulled.
    g.push.noalias() -= w.scale_s * s.z * p.transpose();
    g.push.col(s.label) += w.scale_s * p[s.label] * s.z;
    g.pull.col(s.label) += w.scale_s * (1.0 - p[s.label]) * s.z;
  }
  g.grad = -(g.pull + g.push);
  g.report.pull_norm.resize(static_cast<std::size_t>(m));
  g.report.push_norm.resize(static_cast<std::size_t>(m));
  g.report.ratio.resize(static_cast<std::size_t>(m));
  for (Index j = 0; j < m; ++j) {
    const double pull = g.pull.col(j).norm();
    const double push = g.push.col(j).norm();
    g.report.pull_norm[static_cast<std::size_t>(j)] = pull;
    g.report.push_norm[static_cast<std::size_t>(j)] = push;
    g.report.ratio[static_cast<std::size_t>(j)] =
        pull > 0.0 ? push / pull : (push > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  }
  return g;
}

BaselineResult train_baseline(const LongTailDataset& dataset, Backbone& backbone,
                              CentroidMatrix& w, const BaselineConfig& cfg) {
  if (cfg.batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (w.m() != dataset.m) throw DimensionError("centroid count differs from identity count");
  if (backbone.d() != w.d()) throw DimensionError("backbone output differs from centroid dimension");

  const int heads = head_identities(dataset.m, dataset.head_fraction);
  std::vector<int> head_ids, tail_ids;
  for (int y = 0; y < dataset.m; ++y) {
    const bool tail = y >= heads && dataset.tail_count < dataset.head_count;
    (tail ? tail_ids : head_ids).push_back(y);
  }
  auto tail_separation = [&]() {
    SeparationReport r;
    if (tail_ids.size() < 2) return r;
    Matrix rows(static_cast<Index>(tail_ids.size()), w.d());
    for (std::size_t i = 0; i < tail_ids.size(); ++i) rows.row(static_cast<Index>(i)) = w.w.col(tail_ids[i]).transpose();
    return separation_metrics(CodeVectorMatrix::from_rows(std::move(rows)));
  };

  BaselineResult result;
  result.initial = separation_metrics(w.as_rows());

  std::mt19937_64 rng(cfg.seed);
  std::vector<Sample> order = dataset.samples;
  Mlp grad_net = backbone.net().zeros_like();
  Mlp vel_net = backbone.net().zeros_like();
  Matrix vel_w = Matrix::Zero(w.d(), w.m());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    BaselineEpoch rec;
    rec.epoch = epoch;
    std::vector<double> pull(static_cast<std::size_t>(w.m()), 0.0), push(pull);
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), order.size() - start);
      const double inv_n = 1.0 / static_cast<double>(len);
      for_each_block(grad_net, [](Eigen::Map<Vector> b) { b.setZero(); });

      std::vector<FeatureSample> feats;
      std::vector<Mlp::Cache> caches(len);
      std::vector<Normalized> zs;
      double loss = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        const Sample& s = order[start + i];
        zs.push_back(normalize_with_norm(backbone.net().forward(s.x, caches[i])));
        feats.push_back({zs.back().y, s.label});
      }
      const CeGradient cg = ce_grad_decompose(feats, w);
      for (std::size_t i = 0; i < len; ++i) {
        const Vector logits = w.scale_s * (w.w.transpose() * feats[i].z);
        double log_norm = 0.0;
        Vector p = softmax(logits, &log_norm);
        loss += inv_n * (log_norm - logits[feats[i].label]);
        p[feats[i].label] -= 1.0;
        const Vector grad_z = inv_n * w.scale_s * (w.w * p);
        backbone.net().backward(caches[i], normalize_backward(zs[i], grad_z), grad_net);
      }
      const Matrix grad_w = inv_n * cg.grad;
      if (!std::isfinite(loss) || !grad_w.allFinite()) {
        std::ostringstream msg;
        msg << "baseline training hit a non-finite value at epoch " << epoch << ", batch starting at "
            << start << " (loss=" << loss << ")";
        throw NumericError(msg.str());
      }
      for (Index j = 0; j < w.m(); ++j) {
        pull[static_cast<std::size_t>(j)] += cg.report.pull_norm[static_cast<std::size_t>(j)];
        push[static_cast<std::size_t>(j)] += cg.report.push_norm[static_cast<std::size_t>(j)];
      }

      auto& layers = backbone.net().layers();
      for (std::size_t k = 0; k < layers.size(); ++k) {
        auto& v = vel_net.layers()[k];
        v.weight = cfg.momentum * v.weight + grad_net.layers()[k].weight;
        v.bias = cfg.momentum * v.bias + grad_net.layers()[k].bias;
        layers[k].weight -= cfg.lr * v.weight;
        layers[k].bias -= cfg.lr * v.bias;
      }
      vel_w = cfg.momentum * vel_w + grad_w;
      w.w -= cfg.lr * vel_w;
      w.renormalize();
      rec.loss += loss;
      ++batches;
    }
    if (batches) rec.loss /= batches;
    PullPushReport epoch_report;
    epoch_report.pull_norm = pull;
    epoch_report.push_norm = push;
    for (std::size_t j = 0; j < pull.size(); ++j) {
      epoch_report.ratio.push_back(pull[j] > 0.0 ? push[j] / pull[j]
                                                 : std::numeric_limits<double>::infinity());
    }
    rec.head_push_pull = mean_ratio(epoch_report, head_ids);
    rec.tail_push_pull = mean_ratio(epoch_report, tail_ids);
    rec.separation = separation_metrics(w.as_rows());
    rec.tail_separation = tail_separation();
    result.trajectory.push_back(rec);
  }
  return result;
}

}  // namespace gif
