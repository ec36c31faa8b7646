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

// Margin-free cosine-softmax cross-entropy over learnable centroids, with
// the pull/push split of the centroid gradient.

#include <cstdint>
#include <span>
#include <vector>

#include "gif/data_synth.hpp"
#include "gif/nn.hpp"
#include "gif/sphere.hpp"

namespace gif {

/// d x m matrix of unit-norm centroid columns plus the softmax scale.
struct CentroidMatrix {
  Matrix w;
  double scale_s = 16.0;

  Index d() const { return w.rows(); }
  Index m() const { return w.cols(); }

  static CentroidMatrix random(Index m, Index d, double scale_s, std::uint64_t seed);
  void renormalize();
  /// Centroids as rows, for separation metrics.
  CodeVectorMatrix as_rows() const;
};

struct CeResult {
  double loss = 0.0;
  Vector probs;
};

/// CE of the softmax over s * <w_k, z>. Throws RangeError on a bad label.
CeResult ce_forward(const UnitVector& z, const CentroidMatrix& w, int label);

struct FeatureSample {
  Vector z;  // unit norm
  int label = 0;
};

struct PullPushReport {
  std::vector<double> pull_norm;  // per centroid
  std::vector<double> push_norm;
  /// push / pull; +inf when pull is zero and push is not, 0 when both are.
  std::vector<double> ratio;
};

struct CeGradient {
  Matrix grad;  // d L / d W (sum over the batch), d x m
  Matrix pull;  // f_pull per column
  Matrix push;  // f_push per column
  PullPushReport report;
};

/// Gradient of the summed batch CE w.r.t. every centroid, split as
///   -dL/dw_j = f_pull + f_push,
///   f_pull =  s * sum_{i: y_i = j} (1 - p_j(z_i)) z_i,
///   f_push = -s * sum_{i: y_i != j} p_j(z_i) z_i.
CeGradient ce_grad_decompose(std::span<const FeatureSample> batch, const CentroidMatrix& w);

struct BaselineConfig {
  int epochs = 30;
  int batch_size = 64;
  double lr = 0.1;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

struct BaselineEpoch {
  int epoch = 0;
  double loss = 0.0;
  SeparationReport separation;  // of all centroids
  SeparationReport tail_separation;  // centroids of tail identities (when any)
  double head_push_pull = 0.0;  // mean push/pull over head centroids
  double tail_push_pull = 0.0;  // mean push/pull over tail centroids
};

struct BaselineResult {
  std::vector<BaselineEpoch> trajectory;
  SeparationReport initial;
};

/// Momentum SGD on backbone and centroids with column renormalization;
/// separation of the centroids is logged every epoch.
BaselineResult train_baseline(const LongTailDataset& dataset, Backbone& backbone,
                              CentroidMatrix& w, const BaselineConfig& cfg);

}  // namespace gif
