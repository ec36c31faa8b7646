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

// Multi-token code prediction: per-token projection heads with cosine
// softmax classifiers, angular regression toward frozen code vectors, the
// combined objective and its gradients, SGD training and closed-set
// decoding through the code tree.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gif/data_synth.hpp"
#include "gif/nn.hpp"
#include "gif/sphere.hpp"
#include "gif/tokenizer.hpp"

namespace gif {

/// l projection heads H_phi_j (d -> d -> d -> d, ReLU between) and l
/// classifiers U^j (d x v, unit columns) sharing one softmax scale. A head
/// whose output is exactly zero yields zero logits (uniform tokens).
struct TokenHeads {
  int l = 0;
  int v = 0;
  Index d = 0;
  double scale_s = 16.0;
  std::vector<Mlp> projections;
  std::vector<Matrix> classifiers;

  static TokenHeads create(int l, int v, Index d, double scale_s, std::uint64_t seed);

  void renormalize();
  /// Throws DimensionError / DegenerateInputError when shapes or unit
  /// columns are off.
  void validate() const;
  std::size_t classifier_parameter_count() const;
  std::size_t projection_parameter_count() const;
};

struct GifLossConfig {
  double gamma_balance = 1.0;
  std::vector<double> lambdas;  // empty -> uniform 1/l

  /// Effective per-token weights for code length l (normalized to sum 1).
  std::vector<double> weights(int l) const;
  void validate(int l) const;
};

struct GifModel {
  Backbone backbone;
  TokenHeads heads;
};

/// Per-token softmax distributions for an embedding.
std::vector<Vector> token_probabilities(const UnitVector& z, const TokenHeads& heads);

/// sum_j lambda_j CE(p_j, c_j). Throws RangeError for a token outside
/// [0, v).
double loss_code(const UnitVector& z, const TokenHeads& heads, const IdentityCode& code,
                 const GifLossConfig& cfg);

/// 0.5 (z^T h - 1)^2.
double loss_ar(const UnitVector& z, const UnitVector& h);

/// d loss_ar / dz = (z^T h - 1) h.
Vector grad_ar(const UnitVector& z, const UnitVector& h);

struct LossBreakdown {
  double total = 0.0;
  double l_c = 0.0;
  double l_ar = 0.0;
  std::vector<double> token_acc;  // per token, fraction of argmax hits
  double mean_alignment = 0.0;    // mean cos(z, h_y)
};

struct GifGradients {
  Mlp backbone;
  std::vector<Mlp> projections;
  std::vector<Matrix> classifiers;

  static GifGradients zeros_like(const GifModel& model);
  void set_zero();
};

/// Batch mean of L_C + gamma_balance * L_AR. Throws RangeError naming the
/// label when a sample has no code or code vector.
double loss_total(std::span<const Sample> batch, const Backbone& backbone,
                  const TokenHeads& heads, const CodeVectorMatrix& h,
                  std::span<const IdentityCode> codes, const GifLossConfig& cfg);

/// Loss terms plus, when `grad` is non-null, the gradients w.r.t. every
/// trainable parameter (added into `grad`).
LossBreakdown loss_and_gradients(std::span<const Sample> batch, const GifModel& model,
                                 const CodeVectorMatrix& h, std::span<const IdentityCode> codes,
                                 const GifLossConfig& cfg, GifGradients* grad);

struct SgdConfig {
  double lr = 0.1;
  double momentum = 0.9;
};

struct SgdState {
  std::optional<GifGradients> velocity;
};

/// One momentum-SGD step on theta, every phi_j and every U^j; U columns are
/// renormalized afterwards. Code vectors and codes are read-only. Throws
/// NumericError on a non-finite loss or gradient.
LossBreakdown train_step(std::span<const Sample> batch, GifModel& model,
                         const CodeVectorMatrix& h, std::span<const IdentityCode> codes,
                         const GifLossConfig& cfg, const SgdConfig& sgd, SgdState& state);

struct Prediction {
  int identity = -1;
  bool fallback = false;
  std::vector<int> tokens;  // per-token argmax
};

/// Per-token argmax (lowest index wins ties), decoded through the tree. A
/// code that reaches no identity falls back to the populated leaf with the
/// highest summed token log-probability (lowest identity on ties).
Prediction predict_identity(const UnitVector& z, const TokenHeads& heads, const CodeTree& tree,
                            std::span<const IdentityCode> codes);
Prediction predict_identity(const UnitVector& z, const TokenHeads& heads, const CodeTree& tree);

struct FitConfig {
  int epochs = 30;
  int batch_size = 64;
  SgdConfig sgd;
  std::uint64_t seed = 0;
};

struct EpochMetrics {
  int epoch = 0;
  std::int64_t step = 0;
  LossBreakdown loss;  // averaged over the epoch's steps
};

using StepCallback = std::function<void(std::int64_t step, const LossBreakdown&)>;

/// Shuffled mini-batch training for `cfg.epochs` epochs.
std::vector<EpochMetrics> fit_gif(const LongTailDataset& dataset, GifModel& model,
                                  const CodeVectorMatrix& h, std::span<const IdentityCode> codes,
                                  const GifLossConfig& loss_cfg, const FitConfig& cfg,
                                  const StepCallback& on_step = {});

struct EvalResult {
  double accuracy = 0.0;
  double fallback_rate = 0.0;
  double mean_alignment = 0.0;  // mean cos(z, h_y)
};

EvalResult evaluate_gif(std::span<const Sample> samples, const GifModel& model,
                        const CodeVectorMatrix& h, const CodeTree& tree);

}  // namespace gif
