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

// Binary checkpoints and the newline-delimited JSON metrics stream.
//
// Checkpoint layout (little-endian):
//   "GIFC" magic, u32 version, u32 kind (0 = code heads, 1 = baseline),
//   string config_hash (u32 length + bytes),
//   backbone MLP, then either the token heads (u32 l, u32 v, u32 d,
//   f64 scale_s, l projection MLPs, l d x v classifiers) or the centroid
//   matrix (u32 d, u32 m, f64 scale_s, d x m values).
// An MLP is u32 layer count followed by (u32 out, u32 in, f64 weights
// row-major, f64 bias) per layer.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "gif/baseline_ce.hpp"
#include "gif/gif_model.hpp"

namespace gif {

struct Checkpoint {
  std::string config_hash;
  Backbone backbone;
  std::optional<TokenHeads> heads;
  std::optional<CentroidMatrix> centroids;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Appends one JSON object per line:
///   {"step", "loss", "l_c", "l_ar", "token_acc": [...], "config_hash"}
class MetricsWriter {
 public:
  MetricsWriter(const std::filesystem::path& path, std::string config_hash);
  void write(std::int64_t step, const LossBreakdown& loss);

 private:
  std::ofstream out_;
  std::string config_hash_;
};

}  // namespace gif
