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

// Analytic classifier-size model for a full FC softmax, a subset softmax
// that touches alpha * m centroids per step, and multi-token code heads.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace gif {

enum class MethodKind { kFc, kSubset, kGif };

struct Method {
  MethodKind kind = MethodKind::kFc;
  double alpha = 0.3;  // subset only, 0 < alpha < 1
  int l = 0;           // gif only; 0 -> suggest_length(m)
  int v = 0;

  static Method fc() { return {MethodKind::kFc}; }
  static Method subset(double alpha) { return {MethodKind::kSubset, alpha}; }
  static Method gif(int l = 0, int v = 0) { return {MethodKind::kGif, 0.3, l, v}; }

  /// "fc", "subset:0.3", "gif:6x10" (l x v).
  std::string tag() const;
};

struct CostOptions {
  /// Per-step logit activations (and their gradients) are added to the byte
  /// estimate when > 0; 0 counts weights, gradients and momentum only.
  std::int64_t batch_size = 0;
};

struct CostProfile {
  std::string method;
  std::int64_t m = 0;
  std::int64_t d = 0;
  int l = 0, v = 0;  // gif only
  double classifier_params = 0;     // weights in the classifier
  double head_params = 0;           // gif projection heads, reported apart
  double per_sample_logit_flops = 0;
  double estimated_classifier_bytes = 0;
};

/// Classifier weight count: fc and subset m*d, gif l*v*d. Throws
/// CapacityError when v^l < m for gif, ConfigError on bad alpha/m/d.
double classifier_params(const Method& method, std::int64_t m, std::int64_t d);

CostProfile cost_profile(const Method& method, std::int64_t m, std::int64_t d,
                         const CostOptions& opts = {});

/// One profile per (m, method); gif rows without explicit (l, v) use
/// suggest_length(m). `m_list` must be ascending.
std::vector<CostProfile> scaling_table(std::span<const std::int64_t> m_list, std::int64_t d,
                                       std::span<const Method> methods,
                                       const CostOptions& opts = {});

/// CSV "m,method,params,flops,bytes".
void write_scaling_csv(std::ostream& out, std::span<const CostProfile> rows);

}  // namespace gif
