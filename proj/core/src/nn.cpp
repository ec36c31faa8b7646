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

#include "gif/nn.hpp"

#include <cmath>

#include "gif/error.hpp"

namespace gif {

Mlp::Mlp(const std::vector<Index>& widths, std::mt19937_64& rng) {
  if (widths.size() < 2) throw ConfigError("an MLP needs at least input and output widths");
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    const Index in = widths[k], out = widths[k + 1];
    if (in < 1 || out < 1) throw ConfigError("MLP widths must be positive");
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Dense layer{Matrix(out, in), Vector::Zero(out)};
    for (Index r = 0; r < out; ++r) {
      for (Index c = 0; c < in; ++c) layer.weight(r, c) = u(rng);
    }
    layers_.push_back(std::move(layer));
  }
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) {
    n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
  }
  return n;
}

Vector Mlp::forward(const Vector& x) const {
  Vector h = x;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    h = layers_[k].weight * h + layers_[k].bias;
    if (k + 1 < layers_.size()) h = h.cwiseMax(0.0);
  }
  return h;
}

Vector Mlp::forward(const Vector& x, Cache& cache) const {
  cache.inputs.clear();
  cache.pre.clear();
  Vector h = x;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    cache.inputs.push_back(h);
    Vector pre = layers_[k].weight * h + layers_[k].bias;
    cache.pre.push_back(pre);
    h = k + 1 < layers_.size() ? Vector(pre.cwiseMax(0.0)) : pre;
  }
  return h;
}

Vector Mlp::backward(const Cache& cache, const Vector& grad_out, Mlp& grad) const {
  Vector g = grad_out;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    if (k + 1 < layers_.size()) {
      g = (cache.pre[k].array() > 0.0).select(g, 0.0);
    }
    grad.layers_[k].weight.noalias() += g * cache.inputs[k].transpose();
    grad.layers_[k].bias += g;
    g = layers_[k].weight.transpose() * g;
  }
  return g;
}

Mlp Mlp::zeros_like() const {
  Mlp z;
  for (const auto& layer : layers_) {
    z.layers_.push_back({Matrix::Zero(layer.out(), layer.in()), Vector::Zero(layer.out())});
  }
  return z;
}

void for_each_block(Mlp& a, Mlp& b,
                    const std::function<void(Eigen::Map<Vector>, Eigen::Map<Vector>)>& fn) {
  for (std::size_t k = 0; k < a.layers().size(); ++k) {
    auto& la = a.layers()[k];
    auto& lb = b.layers()[k];
    fn(Eigen::Map<Vector>(la.weight.data(), la.weight.size()),
       Eigen::Map<Vector>(lb.weight.data(), lb.weight.size()));
    fn(Eigen::Map<Vector>(la.bias.data(), la.bias.size()),
       Eigen::Map<Vector>(lb.bias.data(), lb.bias.size()));
  }
}

void for_each_block(Mlp& a, const std::function<void(Eigen::Map<Vector>)>& fn) {
  for (auto& layer : a.layers()) {
    fn(Eigen::Map<Vector>(layer.weight.data(), layer.weight.size()));
    fn(Eigen::Map<Vector>(layer.bias.data(), layer.bias.size()));
  }
}

Normalized normalize_with_norm(const Vector& x) {
  const double n = x.norm();
  if (!std::isfinite(n) || n == 0.0) {
    throw NumericError("cannot normalize a zero or non-finite activation");
  }
  return {x / n, n};
}

Normalized normalize_or_zero(const Vector& x) {
  const double n = x.norm();
  if (!std::isfinite(n)) throw NumericError("cannot normalize a non-finite activation");
  if (n == 0.0) return {Vector::Zero(x.size()), 0.0};
  return {x / n, n};
}

Vector normalize_backward(const Normalized& n, const Vector& grad_y) {
  if (n.norm == 0.0) return Vector::Zero(grad_y.size());
  return (grad_y - n.y * n.y.dot(grad_y)) / n.norm;
}

Backbone::Backbone(const std::vector<Index>& widths, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  net_ = Mlp(widths, rng);
}

Vector Backbone::embed(const Vector& x) const { return normalize_with_norm(net_.forward(x)).y; }

}  // namespace gif
