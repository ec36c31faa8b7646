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

// Unit-hypersphere primitives: normalization, the Gaussian potential
// uniformity objective and its Riemannian gradient, projected-gradient
// optimization of code vectors, and pairwise separation metrics.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace gif {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

inline constexpr double kUnitTolerance = 1e-6;

/// A d-dimensional vector of unit Euclidean norm (d >= 2 enforced by
/// normalize()).
class UnitVector {
 public:
  /// Normalizes `values`. Throws DegenerateInputError on zero norm.
  explicit UnitVector(Vector values);

  const Vector& values() const { return values_; }
  Index dim() const { return values_.size(); }
  double operator[](Index i) const { return values_[i]; }

 private:
  Vector values_;
};

/// Returns v / ||v||. Throws DegenerateInputError when ||v|| == 0 or the
/// vector is not finite.
UnitVector normalize(const Vector& v);

/// m x d matrix whose rows are the unit-norm code vectors of identities
/// 0..m-1.
class CodeVectorMatrix {
 public:
  /// Normalizes every row of `rows`. Requires m >= 2 unless `allow_single`
  /// and d >= 1; throws DegenerateInputError on a zero row.
  static CodeVectorMatrix from_rows(Matrix rows, bool allow_single = false);

  /// Wraps rows that are already unit norm, verifying the invariant.
  static CodeVectorMatrix from_unit_rows(Matrix rows, bool allow_single = false);

  Index m() const { return rows_.rows(); }
  Index d() const { return rows_.cols(); }
  const Matrix& rows() const { return rows_; }
  auto row(Index i) const { return rows_.row(i); }
  UnitVector unit_row(Index i) const { return UnitVector(rows_.row(i).transpose()); }

  bool operator==(const CodeVectorMatrix& other) const {
    return rows_.rows() == other.rows_.rows() && rows_.cols() == other.rows_.cols() &&
           rows_ == other.rows_;
  }

 private:
  explicit CodeVectorMatrix(Matrix rows) : rows_(std::move(rows)) {}
  Matrix rows_;
};

struct UniformityConfig {
  double t = 2.0;             // kernel temperature
  Index batch_rows = 0;       // rows sampled per step; 0 -> min(m, 2048)
  double lr = 0.1;
  int epochs = 1000;
  std::uint64_t seed = 0;
  int threads = 1;

  /// Effective mini-batch size for a matrix with `m` rows.
  Index effective_batch(Index m) const;
  /// Throws ConfigError when a field is outside its domain.
  void validate(Index m) const;
};

struct SeparationReport {
  double min_dist = 0.0;
  double max_dist = 0.0;
  double mean_dist = 0.0;
  bool exact = true;
  std::uint64_t sampled_pairs = 0;  // 0 when exact
};

/// e^{-t ||a - b||^2}.
double gaussian_potential(const UnitVector& a, const UnitVector& b, double t);

/// Log of the mean Gaussian potential between each row in `row_subset` and
/// every other row of H (self-pairs i == j excluded).
double uniformity_loss(const CodeVectorMatrix& h, const UniformityConfig& cfg,
                       std::span<const Index> row_subset);

/// Full-batch uniformity loss (all rows as anchors).
double uniformity_loss(const CodeVectorMatrix& h, const UniformityConfig& cfg);

/// Gradient of uniformity_loss with respect to the rows in `row_subset`,
/// projected onto the tangent space of the sphere at each row. Rows not in
/// the subset are zero.
Matrix uniformity_grad(const CodeVectorMatrix& h, const UniformityConfig& cfg,
                       std::span<const Index> row_subset);

/// Per-epoch hook for optimize_code_vectors; receives the epoch index and
/// the mini-batch loss before the update.
using UniformityObserver = std::function<void(int epoch, double batch_loss)>;

/// Riemannian SGD on the uniformity loss: project, step, renormalize.
/// Throws NumericError (message carries the iteration) on NaN/Inf.
CodeVectorMatrix optimize_code_vectors(const CodeVectorMatrix& h_init,
                                       const UniformityConfig& cfg,
                                       const UniformityObserver& observer = {});

struct SeparationOptions {
  Index exact_threshold = 20000;  // exact pairwise enumeration up to this m
  std::uint64_t sample_pairs = 1000000;
  std::uint64_t seed = 0;
};

/// Min/max/mean pairwise cosine distance (1 - cos). Exact up to
/// `exact_threshold` rows; beyond that mean and max come from uniformly
/// sampled pairs while min stays exact via a nearest-neighbour pass.
SeparationReport separation_metrics(const CodeVectorMatrix& h,
                                     const SeparationOptions& opts = {});

/// Convenience: m random unit rows drawn from an isotropic Gaussian.
CodeVectorMatrix random_code_vectors(Index m, Index d, std::uint64_t seed);

}  // namespace gif
