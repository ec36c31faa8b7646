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

// Minimal dense MLP with manual backpropagation, used for the backbone and
// the per-token projection heads.

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "gif/sphere.hpp"

namespace gif {

struct Dense {
  Matrix weight;  // out x in
  Vector bias;    // out

  Index in() const { return weight.cols(); }
  Index out() const { return weight.rows(); }
};

/// Linear layers with ReLU between them; the last layer is linear.
class Mlp {
 public:
  Mlp() = default;
  /// widths = {in, hidden..., out}. He-style uniform init from `rng`.
  Mlp(const std::vector<Index>& widths, std::mt19937_64& rng);

  Index in() const { return layers_.empty() ? 0 : layers_.front().in(); }
  Index out() const { return layers_.empty() ? 0 : layers_.back().out(); }
  std::vector<Dense>& layers() { return layers_; }
  const std::vector<Dense>& layers() const { return layers_; }
  std::size_t parameter_count() const;

  struct Cache {
    std::vector<Vector> inputs;  // input to each layer (post-activation)
    std::vector<Vector> pre;     // pre-activation of each layer
  };

  Vector forward(const Vector& x) const;
  Vector forward(const Vector& x, Cache& cache) const;

  /// Accumulates parameter gradients into `grad` (same shape as *this) and
  /// returns d loss / d input.
  Vector backward(const Cache& cache, const Vector& grad_out, Mlp& grad) const;

  /// Same shapes, all zeros.
  Mlp zeros_like() const;

 private:
  std::vector<Dense> layers_;
};

/// Visits (parameter, companion) block pairs of two structurally identical
/// MLPs as flat spans.
void for_each_block(Mlp& a, Mlp& b, const std::function<void(Eigen::Map<Vector>, Eigen::Map<Vector>)>& fn);
void for_each_block(Mlp& a, const std::function<void(Eigen::Map<Vector>)>& fn);

/// y = x / ||x|| together with the Jacobian-vector product needed for
/// backprop: d/dx = (I - y y^T) g / ||x||.
struct Normalized {
  Vector y;
  double norm = 0.0;
};
Normalized normalize_with_norm(const Vector& x);
/// As normalize_with_norm, but a zero input maps to the zero vector (norm
/// 0) whose backward pass is zero.
Normalized normalize_or_zero(const Vector& x);
Vector normalize_backward(const Normalized& n, const Vector& grad_y);

/// F_theta: MLP followed by l2 normalization.
class Backbone {
 public:
  Backbone() = default;
  /// widths = {input_dim, hidden..., d}.
  Backbone(const std::vector<Index>& widths, std::uint64_t seed);

  Index input_dim() const { return net_.in(); }
  Index d() const { return net_.out(); }
  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }

  /// Unit-norm embedding. Throws NumericError on a zero or non-finite
  /// pre-normalization output.
  Vector embed(const Vector& x) const;

 private:
  Mlp net_;
};

}  // namespace gif
