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

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace gif::test {

/// Seeded generator for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }

  Eigen::VectorXd gaussian(Eigen::Index d) {
    Eigen::VectorXd v(d);
    for (Eigen::Index i = 0; i < d; ++i) v[i] = normal();
    return v;
  }
  Eigen::VectorXd unit(Eigen::Index d) {
    Eigen::VectorXd v = gaussian(d);
    return v / v.norm();
  }
  Eigen::MatrixXd unit_rows(Eigen::Index m, Eigen::Index d) {
    Eigen::MatrixXd h(m, d);
    for (Eigen::Index i = 0; i < m; ++i) h.row(i) = unit(d).transpose();
    return h;
  }
  /// Haar-random orthogonal matrix via QR with sign correction.
  Eigen::MatrixXd rotation(Eigen::Index d) {
    Eigen::MatrixXd a(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j) a(i, j) = normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ();
    Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < d; ++j)
      if (r(j, j) < 0) q.col(j) *= -1.0;
    return q;
  }
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

/// Relative error of two gradient vectors, ||a - b|| / max(||a||, ||b||, floor).
inline double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double floor = 1e-8) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), floor});
}

/// Central differences of f over every entry of x.
inline Eigen::MatrixXd central_diff(Eigen::MatrixXd x, const std::function<double(const Eigen::MatrixXd&)>& f,
                                    double step = 1e-5) {
  Eigen::MatrixXd g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double keep = x(i, j);
      x(i, j) = keep + step;
      const double up = f(x);
      x(i, j) = keep - step;
      const double down = f(x);
      x(i, j) = keep;
      g(i, j) = (up - down) / (2.0 * step);
    }
  }
  return g;
}

/// Log-mean Gaussian potential over (anchor, other) pairs, self-pairs
/// skipped, evaluated coordinate by coordinate on raw rows.
inline double oracle_uniformity(const Eigen::MatrixXd& h, double t, const std::vector<Eigen::Index>& anchors) {
  double sum = 0.0;
  double pairs = 0.0;
  for (Eigen::Index i : anchors) {
    for (Eigen::Index j = 0; j < h.rows(); ++j) {
      if (j == i) continue;
      double sq = 0.0;
      for (Eigen::Index k = 0; k < h.cols(); ++k) {
        const double diff = h(i, k) - h(j, k);
        sq += diff * diff;
      }
      sum += std::exp(-t * sq);
      pairs += 1.0;
    }
  }
  return std::log(sum / pairs);
}

inline std::vector<Eigen::Index> all_rows(Eigen::Index m) {
  std::vector<Eigen::Index> r(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) r[static_cast<std::size_t>(i)] = i;
  return r;
}

/// m unit vectors at equal angles 2 pi k / m, offset by `phase`.
inline Eigen::MatrixXd polygon(int m, double phase = 0.0) {
  Eigen::MatrixXd h(m, 2);
  for (int k = 0; k < m; ++k) {
    const double a = phase + 2.0 * std::numbers::pi * k / m;
    h(k, 0) = std::cos(a);
    h(k, 1) = std::sin(a);
  }
  return h;
}

/// Pairwise cosine-distance extremes by enumeration.
struct PairStats {
  double min = 0, max = 0, mean = 0;
};
inline PairStats oracle_pairs(const Eigen::MatrixXd& h) {
  PairStats s{1e300, -1e300, 0.0};
  double n = 0;
  for (Eigen::Index i = 0; i < h.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < h.rows(); ++j) {
      const double c = h.row(i).dot(h.row(j)) / (h.row(i).norm() * h.row(j).norm());
      const double dist = 1.0 - c;
      s.min = std::min(s.min, dist);
      s.max = std::max(s.max, dist);
      s.mean += dist;
      n += 1;
    }
  }
  s.mean /= n;
  return s;
}

/// Best spherical k-means objective over every partition of <= 16 points
/// into exactly two non-empty groups: sum of ||sum of group||.
struct Partition {
  double objective = -1.0;
  std::uint32_t mask = 0;  // bit i set -> point i in the group without point 0
};
inline Partition brute_force_two_way(const Eigen::MatrixXd& pts) {
  const int n = static_cast<int>(pts.rows());
  Partition best;
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    if (mask & 1u) continue;
    Eigen::VectorXd a = Eigen::VectorXd::Zero(pts.cols()), b = a;
    for (int i = 0; i < n; ++i) ((mask >> i) & 1u ? b : a) += pts.row(i).transpose();
    const double obj = a.norm() + b.norm();
    if (obj > best.objective + 1e-12) best = {obj, mask};
  }
  return best;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("gif_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace gif::test
