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

#include "gif/sphere.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "gif/error.hpp"

namespace gif {
namespace {

double checked_norm(const Vector& v) {
  if (v.size() < 2) {
    throw DimensionError("unit vectors need dimension >= 2, got " + std::to_string(v.size()));
  }
  const double n = v.norm();
  if (!std::isfinite(n)) throw DegenerateInputError("vector has non-finite entries");
  if (n == 0.0) throw DegenerateInputError("cannot normalize a zero-norm vector");
  return n;
}

void check_rows(const Matrix& rows, bool allow_single) {
  if (rows.rows() < (allow_single ? 1 : 2)) {
    throw DimensionError("code vector matrix needs m >= 2 rows, got " +
                         std::to_string(rows.rows()));
  }
  if (rows.cols() < 2) {
    throw DimensionError("code vector matrix needs d >= 2, got " + std::to_string(rows.cols()));
  }
}

std::vector<char> subset_mask(Index m, std::span<const Index> subset) {
  if (subset.empty()) throw ConfigError("uniformity loss needs a non-empty row subset");
  std::vector<char> mask(static_cast<std::size_t>(m), 0);
  for (Index i : subset) {
    if (i < 0 || i >= m) {
      throw RangeError("row index " + std::to_string(i) + " outside [0, " + std::to_string(m) +
                       ")");
    }
    if (mask[static_cast<std::size_t>(i)]) {
      throw ConfigError("row index " + std::to_string(i) + " repeated in subset");
    }
    mask[static_cast<std::size_t>(i)] = 1;
  }
  return mask;
}

struct PotentialSum {
  double sum = 0.0;
  Matrix grad;  // unscaled d(sum)/dH, only subset rows populated
};

// Accumulates sum_{i in anchors} sum_{j != i} g_ij and, optionally, its
// Euclidean gradient w.r.t. the masked rows. Anchors must be the masked rows.
// Each anchor owns its partial sum and gradient row, so the result does not
// depend on how anchors are split across threads.
void accumulate_range(const Matrix& h, double t, std::span<const Index> anchors,
                      const std::vector<char>& mask, bool with_grad, std::size_t begin,
                      std::size_t end, std::vector<double>& sums, Matrix* grad) {
  const Index m = h.rows();
  Vector gi(h.cols());
  for (std::size_t a = begin; a < end; ++a) {
    const Index i = anchors[a];
    const auto hi = h.row(i);
    double sum = 0.0;
    gi.setZero();
    for (Index j = 0; j < m; ++j) {
      if (j == i) continue;
      const double g = std::exp(-t * (hi - h.row(j)).squaredNorm());
      sum += g;
      if (!with_grad) continue;
      // pair counted once from i and once more from j when j is an anchor
      const double coef = -2.0 * t * g * (mask[static_cast<std::size_t>(j)] ? 2.0 : 1.0);
      gi += coef * (hi - h.row(j)).transpose();
    }
    sums[a] = sum;
    if (with_grad) grad->row(i) = gi.transpose();
  }
}

PotentialSum accumulate_parallel(const Matrix& h, double t, std::span<const Index> anchors,
                                 const std::vector<char>& mask, bool with_grad, int threads) {
  const auto n = anchors.size();
  threads = std::clamp(threads, 1, std::max(1, static_cast<int>(n)));
  PotentialSum out;
  if (with_grad) out.grad = Matrix::Zero(h.rows(), h.cols());
  Matrix* grad = with_grad ? &out.grad : nullptr;
  std::vector<double> sums(n, 0.0);
  if (threads == 1) {
    accumulate_range(h, t, anchors, mask, with_grad, 0, n, sums, grad);
  } else {
    std::vector<std::thread> pool;
    const std::size_t block = (n + static_cast<std::size_t>(threads) - 1) / static_cast<std::size_t>(threads);
    for (std::size_t begin = 0; begin < n; begin += block) {
      const std::size_t end = std::min(n, begin + block);
      pool.emplace_back([&, begin, end] {
        accumulate_range(h, t, anchors, mask, with_grad, begin, end, sums, grad);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (double s : sums) out.sum += s;
  return out;
}

double pair_count(Index anchors, Index m) {
  return static_cast<double>(anchors) * static_cast<double>(m - 1);
}

void project_to_tangent(const Matrix& h, Matrix& grad, std::span<const Index> rows) {
  for (Index i : rows) {
    const double radial = grad.row(i).dot(h.row(i));
    grad.row(i) -= radial * h.row(i);
  }
}

double cosine_distance(double cos) { return std::clamp(1.0 - cos, 0.0, 2.0); }

}  // namespace

UnitVector::UnitVector(Vector values) : values_(std::move(values)) {
  values_ /= checked_norm(values_);
}

UnitVector normalize(const Vector& v) { return UnitVector(v); }

CodeVectorMatrix CodeVectorMatrix::from_rows(Matrix rows, bool allow_single) {
  check_rows(rows, allow_single);
  for (Index i = 0; i < rows.rows(); ++i) {
    const double n = rows.row(i).norm();
    if (!std::isfinite(n) || n == 0.0) {
      throw DegenerateInputError("code vector row " + std::to_string(i) +
                                 " has zero or non-finite norm");
    }
    rows.row(i) /= n;
  }
  return CodeVectorMatrix(std::move(rows));
}

CodeVectorMatrix CodeVectorMatrix::from_unit_rows(Matrix rows, bool allow_single) {
  check_rows(rows, allow_single);
  for (Index i = 0; i < rows.rows(); ++i) {
    if (std::abs(rows.row(i).norm() - 1.0) > kUnitTolerance) {
      throw DegenerateInputError("code vector row " + std::to_string(i) + " is not unit norm");
    }
  }
  return CodeVectorMatrix(std::move(rows));
}

Index UniformityConfig::effective_batch(Index m) const {
  if (batch_rows > 0) return std::min(batch_rows, m);
  return std::min<Index>(m, 2048);
}

void UniformityConfig::validate(Index m) const {
  if (!(t > 0.0)) throw ConfigError("uniformity temperature t must be > 0");
  if (!(lr > 0.0)) throw ConfigError("uniformity learning rate must be > 0");
  if (epochs < 0) throw ConfigError("uniformity epochs must be >= 0");
  if (batch_rows < 0 || batch_rows > m) {
    throw ConfigError("uniformity batch_rows must lie in [1, m]");
  }
}

double gaussian_potential(const UnitVector& a, const UnitVector& b, double t) {
  if (a.dim() != b.dim()) {
    throw DimensionError("gaussian_potential: dimension mismatch " + std::to_string(a.dim()) +
                         " vs " + std::to_string(b.dim()));
  }
  if (!(t > 0.0)) throw ConfigError("gaussian_potential: t must be > 0");
  return std::exp(-t * (a.values() - b.values()).squaredNorm());
}

double uniformity_loss(const CodeVectorMatrix& h, const UniformityConfig& cfg,
                       std::span<const Index> row_subset) {
  const auto mask = subset_mask(h.m(), row_subset);
  const auto acc = accumulate_parallel(h.rows(), cfg.t, row_subset, mask, false, cfg.threads);
  return std::log(acc.sum / pair_count(static_cast<Index>(row_subset.size()), h.m()));
}

double uniformity_loss(const CodeVectorMatrix& h, const UniformityConfig& cfg) {
  std::vector<Index> all(static_cast<std::size_t>(h.m()));
  std::iota(all.begin(), all.end(), Index{0});
  return uniformity_loss(h, cfg, all);
}

Matrix uniformity_grad(const CodeVectorMatrix& h, const UniformityConfig& cfg,
                       std::span<const Index> row_subset) {
  const auto mask = subset_mask(h.m(), row_subset);
  auto acc = accumulate_parallel(h.rows(), cfg.t, row_subset, mask, true, cfg.threads);
  // d log(S / N) = dS / S
  acc.grad /= acc.sum;
  project_to_tangent(h.rows(), acc.grad, row_subset);
  return acc.grad;
}

CodeVectorMatrix optimize_code_vectors(const CodeVectorMatrix& h_init,
                                       const UniformityConfig& cfg,
                                       const UniformityObserver& observer) {
  const Index m = h_init.m();
  cfg.validate(m);
  const Index batch = cfg.effective_batch(m);

  Matrix h = h_init.rows();
  std::mt19937_64 rng(cfg.seed);
  std::vector<Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Index{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (batch < m) {
      // Partial Fisher-Yates: the first `batch` entries form a uniform subset.
      for (Index k = 0; k < batch; ++k) {
        std::uniform_int_distribution<Index> pick(k, m - 1);
        std::swap(order[static_cast<std::size_t>(k)],
                  order[static_cast<std::size_t>(pick(rng))]);
      }
    }
    const std::span<const Index> subset(order.data(), static_cast<std::size_t>(batch));
    const auto mask = subset_mask(m, subset);
    auto acc = accumulate_parallel(h, cfg.t, subset, mask, true, cfg.threads);
    const double loss = std::log(acc.sum / pair_count(batch, m));
    if (!std::isfinite(loss) || !acc.grad.allFinite()) {
      std::ostringstream msg;
      msg << "uniformity optimization produced a non-finite value at iteration " << epoch
          << " (loss=" << loss << ")";
      throw NumericError(msg.str());
    }
    if (observer) observer(epoch, loss);
    acc.grad /= acc.sum;
    project_to_tangent(h, acc.grad, subset);
    for (Index i : subset) {
      h.row(i) -= cfg.lr * acc.grad.row(i);
      h.row(i).normalize();
    }
  }
  return CodeVectorMatrix::from_unit_rows(std::move(h), m < 2);
}

SeparationReport separation_metrics(const CodeVectorMatrix& h, const SeparationOptions& opts) {
  const Index m = h.m();
  if (m < 2) throw DimensionError("separation metrics need m >= 2");
  const Matrix& rows = h.rows();
  SeparationReport r;

  if (m <= opts.exact_threshold) {
    double lo = 2.0, hi = 0.0, sum = 0.0;
    for (Index i = 0; i + 1 < m; ++i) {
      const Vector dots = rows.bottomRows(m - i - 1) * rows.row(i).transpose();
      for (Index k = 0; k < dots.size(); ++k) {
        const double dist = cosine_distance(dots[k]);
        lo = std::min(lo, dist);
        hi = std::max(hi, dist);
        sum += dist;
      }
    }
    r.min_dist = lo;
    r.max_dist = hi;
    r.mean_dist = sum / (0.5 * static_cast<double>(m) * static_cast<double>(m - 1));
    r.exact = true;
    return r;
  }

  std::mt19937_64 rng(opts.seed);
  std::uniform_int_distribution<Index> pick(0, m - 1);
  double hi = 0.0, sum = 0.0;
  for (std::uint64_t s = 0; s < opts.sample_pairs; ++s) {
    const Index i = pick(rng);
    Index j = pick(rng);
    while (j == i) j = pick(rng);
    const double dist = cosine_distance(rows.row(i).dot(rows.row(j)));
    hi = std::max(hi, dist);
    sum += dist;
  }
  // Nearest-neighbour pass keeps the minimum exact.
  double best_cos = -1.0;
  for (Index i = 0; i + 1 < m; ++i) {
    const Vector dots = rows.bottomRows(m - i - 1) * rows.row(i).transpose();
    best_cos = std::max(best_cos, dots.maxCoeff());
  }
  r.min_dist = cosine_distance(best_cos);
  r.max_dist = std::max(hi, r.min_dist);
  r.mean_dist = std::clamp(sum / static_cast<double>(opts.sample_pairs), r.min_dist, r.max_dist);
  r.exact = false;
  r.sampled_pairs = opts.sample_pairs;
  return r;
}

CodeVectorMatrix random_code_vectors(Index m, Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix rows(m, d);
  for (Index i = 0; i < m; ++i) {
    do {
      for (Index k = 0; k < d; ++k) rows(i, k) = gauss(rng);
    } while (rows.row(i).norm() == 0.0);
  }
  return CodeVectorMatrix::from_rows(std::move(rows), m < 2);
}

}  // namespace gif
