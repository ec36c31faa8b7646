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

// Synthetic identity data: prototype directions on the sphere, long-tail
// sampling, a file-backed embedding provider, and per-class mean
// initialization of code vectors.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "gif/sphere.hpp"

namespace gif {

struct Sample {
  int id = 0;     // sample id, resolves embeddings
  int label = 0;  // identity in [0, m)
  Vector x;       // raw input features
};

/// Prototype directions with a Gaussian-perturb-then-normalize sampler.
/// `dispersion` is a concentration: noise sigma = 1 / sqrt(dispersion), and
/// an infinite dispersion yields noise-free samples.
class IdentityGenerator {
 public:
  IdentityGenerator(Matrix prototypes, double dispersion);

  Index m() const { return prototypes_.rows(); }
  Index d() const { return prototypes_.cols(); }
  const Matrix& prototypes() const { return prototypes_; }
  double dispersion() const { return dispersion_; }
  double sigma() const { return sigma_; }

  Vector sample(int identity, std::mt19937_64& rng) const;

 private:
  Matrix prototypes_;
  double dispersion_;
  double sigma_;
};

/// m random prototypes in R^d. With `min_separation` > 0 each prototype is
/// redrawn (bounded attempts) until its cosine distance to all earlier ones
/// reaches that value; throws ConfigError when that cannot be met.
IdentityGenerator gen_identities(int m, int d, double dispersion, std::uint64_t seed,
                                 double min_separation = 0.0);

struct LongTailDataset {
  std::vector<Sample> samples;
  int m = 0;
  std::vector<int> counts;
  double head_fraction = 1.0;
  int head_count = 0;
  int tail_count = 0;

  Index feature_dim() const { return samples.empty() ? 0 : samples.front().x.size(); }
};

/// The first ceil(head_fraction * m) identities receive `head_count`
/// samples, the rest `tail_count`; the sample order is shuffled with `seed`.
LongTailDataset sample_longtail(const IdentityGenerator& gen, double head_fraction, int head_count,
                                int tail_count, std::uint64_t seed);

/// Number of head identities for a given fraction.
int head_identities(int m, double head_fraction);

/// Maps sample ids to d-dimensional embeddings.
class EmbeddingProvider {
 public:
  /// Embeddings are the samples' own feature vectors.
  static EmbeddingProvider from_dataset(const LongTailDataset& dataset);
  /// CSV "sample_id,label,e_1,...,e_d" (header line optional).
  static EmbeddingProvider from_csv(const std::filesystem::path& path);
  /// CVM1 matrix plus a sidecar CSV "sample_id,label" per row.
  static EmbeddingProvider from_cvm(const std::filesystem::path& matrix_path,
                                    const std::filesystem::path& index_path);

  Index d() const { return d_; }
  std::size_t size() const { return ids_.size(); }
  bool contains(int sample_id) const { return row_of_.count(sample_id) != 0; }
  /// Throws RangeError for an unknown id.
  Vector embedding(int sample_id) const;
  const std::vector<int>& ids() const { return ids_; }
  const std::vector<int>& labels() const { return labels_; }

  /// A dataset whose features are the provider's embeddings.
  LongTailDataset as_dataset() const;

  void write_csv(const std::filesystem::path& path) const;

 private:
  EmbeddingProvider(Matrix rows, std::vector<int> ids, std::vector<int> labels);

  Matrix rows_;
  std::vector<int> ids_;
  std::vector<int> labels_;
  std::unordered_map<int, Index> row_of_;
  Index d_ = 0;
};

/// Per-identity mean of the provided embeddings, normalized. Throws
/// DegenerateInputError for an identity without samples or with a zero
/// mean.
CodeVectorMatrix per_class_mean_init(const EmbeddingProvider& provider,
                                     const LongTailDataset& dataset);

/// Manifest: JSON with the imbalance parameters and counts per identity.
void write_manifest(const std::filesystem::path& path, const LongTailDataset& dataset,
                    const std::string& config_hash = {});

}  // namespace gif
