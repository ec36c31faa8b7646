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

#include "gif/data_synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "gif/cvm_io.hpp"
#include "gif/error.hpp"
#include <nlohmann/json.hpp>

namespace gif {
namespace {

constexpr int kMaxPrototypeAttempts = 10000;

Vector gaussian_vector(Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector v(d);
  for (Index k = 0; k < d; ++k) v[k] = gauss(rng);
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  return cells;
}

bool is_header(const std::string& line) {
  return !line.empty() && !(std::isdigit(static_cast<unsigned char>(line[0])) || line[0] == '-');
}

}  // namespace

IdentityGenerator::IdentityGenerator(Matrix prototypes, double dispersion)
    : prototypes_(std::move(prototypes)), dispersion_(dispersion) {
  if (!(dispersion_ > 0.0)) throw ConfigError("dispersion must be > 0");
  sigma_ = std::isinf(dispersion_) ? 0.0 : 1.0 / std::sqrt(dispersion_);
  for (Index i = 0; i < prototypes_.rows(); ++i) prototypes_.row(i).normalize();
}

Vector IdentityGenerator::sample(int identity, std::mt19937_64& rng) const {
  if (identity < 0 || identity >= m()) throw RangeError("identity out of range");
  Vector x = prototypes_.row(identity).transpose();
  if (sigma_ == 0.0) return x;
  for (;;) {
    Vector y = x + sigma_ * gaussian_vector(d(), rng);
    const double n = y.norm();
    if (n > 0.0) return y / n;
  }
}

IdentityGenerator gen_identities(int m, int d, double dispersion, std::uint64_t seed,
                                 double min_separation) {
  if (m < 2) throw ConfigError("gen_identities needs m >= 2");
  if (d < 2) throw ConfigError("gen_identities needs d >= 2");
  std::mt19937_64 rng(seed);
  Matrix protos(m, d);
  for (int i = 0; i < m; ++i) {
    int attempts = 0;
    for (;;) {
      Vector p = gaussian_vector(d, rng);
      if (p.norm() == 0.0) continue;
      p.normalize();
      bool ok = true;
      for (int k = 0; k < i && min_separation > 0.0; ++k) {
        if (1.0 - protos.row(k).dot(p) < min_separation) {
          ok = false;
          break;
        }
      }
      if (ok) {
        protos.row(i) = p.transpose();
        break;
      }
      if (++attempts > kMaxPrototypeAttempts) {
        throw ConfigError("cannot place " + std::to_string(m) + " prototypes in d=" +
                          std::to_string(d) + " with min separation " +
                          std::to_string(min_separation));
      }
    }
  }
  return IdentityGenerator(std::move(protos), dispersion);
}

int head_identities(int m, double head_fraction) {
  const double h = std::ceil(std::clamp(head_fraction, 0.0, 1.0) * m - 1e-9);
  return std::clamp(static_cast<int>(h), 0, m);
}

LongTailDataset sample_longtail(const IdentityGenerator& gen, double head_fraction, int head_count,
                                int tail_count, std::uint64_t seed) {
  if (tail_count < 1 || head_count < tail_count) {
    throw ConfigError("sample_longtail needs head_count >= tail_count >= 1");
  }
  LongTailDataset ds;
  ds.m = static_cast<int>(gen.m());
  ds.head_fraction = head_fraction;
  ds.head_count = head_count;
  ds.tail_count = tail_count;
  const int heads = head_identities(ds.m, head_fraction);
  std::mt19937_64 rng(seed);
  for (int y = 0; y < ds.m; ++y) {
    const int n = y < heads ? head_count : tail_count;
    ds.counts.push_back(n);
    for (int k = 0; k < n; ++k) ds.samples.push_back({0, y, gen.sample(y, rng)});
  }
  std::shuffle(ds.samples.begin(), ds.samples.end(), rng);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) ds.samples[i].id = static_cast<int>(i);
  return ds;
}

EmbeddingProvider::EmbeddingProvider(Matrix rows, std::vector<int> ids, std::vector<int> labels)
    : rows_(std::move(rows)), ids_(std::move(ids)), labels_(std::move(labels)), d_(rows_.cols()) {
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!row_of_.emplace(ids_[i], static_cast<Index>(i)).second) {
      throw FormatError("duplicate sample id " + std::to_string(ids_[i]) + " in embeddings");
    }
  }
}

EmbeddingProvider EmbeddingProvider::from_dataset(const LongTailDataset& dataset) {
  const Index d = dataset.feature_dim();
  Matrix rows(static_cast<Index>(dataset.samples.size()), d);
  std::vector<int> ids, labels;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    rows.row(static_cast<Index>(i)) = dataset.samples[i].x.transpose();
    ids.push_back(dataset.samples[i].id);
    labels.push_back(dataset.samples[i].label);
  }
  return EmbeddingProvider(std::move(rows), std::move(ids), std::move(labels));
}

EmbeddingProvider EmbeddingProvider::from_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::vector<double>> values;
  std::vector<int> ids, labels;
  std::string line;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (ids.empty() && values.empty() && is_header(line)) continue;
    const auto cells = split_csv(line);
    if (cells.size() < 3) throw FormatError("embedding CSV row needs id,label,e_1..e_d");
    if (width == 0) width = cells.size();
    if (cells.size() != width) throw FormatError("embedding CSV has ragged rows");
    try {
      ids.push_back(std::stoi(cells[0]));
      labels.push_back(std::stoi(cells[1]));
      std::vector<double> row;
      for (std::size_t k = 2; k < cells.size(); ++k) row.push_back(std::stod(cells[k]));
      values.push_back(std::move(row));
    } catch (const std::exception&) {
      throw FormatError("embedding CSV: bad value in line '" + line + "'");
    }
  }
  Matrix rows(static_cast<Index>(values.size()), static_cast<Index>(width >= 2 ? width - 2 : 0));
  for (std::size_t i = 0; i < values.size(); ++i) {
    for (std::size_t k = 0; k < values[i].size(); ++k) rows(static_cast<Index>(i), static_cast<Index>(k)) = values[i][k];
  }
  return EmbeddingProvider(std::move(rows), std::move(ids), std::move(labels));
}

EmbeddingProvider EmbeddingProvider::from_cvm(const std::filesystem::path& matrix_path,
                                              const std::filesystem::path& index_path) {
  Matrix rows = read_cvm(matrix_path);
  std::ifstream in(index_path);
  if (!in) throw FormatError("cannot open " + index_path.string());
  std::vector<int> ids, labels;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || (ids.empty() && is_header(line))) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 2) throw FormatError("embedding index rows must be sample_id,label");
    ids.push_back(std::stoi(cells[0]));
    labels.push_back(std::stoi(cells[1]));
  }
  if (static_cast<Index>(ids.size()) != rows.rows()) {
    throw FormatError("embedding index has " + std::to_string(ids.size()) + " rows, matrix has " +
                      std::to_string(rows.rows()));
  }
  return EmbeddingProvider(std::move(rows), std::move(ids), std::move(labels));
}

Vector EmbeddingProvider::embedding(int sample_id) const {
  const auto it = row_of_.find(sample_id);
  if (it == row_of_.end()) throw RangeError("no embedding for sample " + std::to_string(sample_id));
  return rows_.row(it->second).transpose();
}

LongTailDataset EmbeddingProvider::as_dataset() const {
  LongTailDataset ds;
  int max_label = -1;
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (labels_[i] < 0) throw FormatError("negative label in embeddings");
    ds.samples.push_back({ids_[i], labels_[i], rows_.row(static_cast<Index>(i)).transpose()});
    max_label = std::max(max_label, labels_[i]);
  }
  ds.m = max_label + 1;
  ds.counts.assign(static_cast<std::size_t>(ds.m), 0);
  for (int y : labels_) ++ds.counts[static_cast<std::size_t>(y)];
  ds.head_count = ds.counts.empty() ? 0 : *std::max_element(ds.counts.begin(), ds.counts.end());
  ds.tail_count = ds.counts.empty() ? 0 : *std::min_element(ds.counts.begin(), ds.counts.end());
  return ds;
}

void EmbeddingProvider::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.precision(std::numeric_limits<double>::max_digits10);
  out << "sample_id,label";
  for (Index k = 0; k < d_; ++k) out << ",e_" << (k + 1);
  out << '\n';
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    out << ids_[i] << ',' << labels_[i];
    for (Index k = 0; k < d_; ++k) out << ',' << rows_(static_cast<Index>(i), k);
    out << '\n';
  }
}

CodeVectorMatrix per_class_mean_init(const EmbeddingProvider& provider,
                                     const LongTailDataset& dataset) {
  const int m = dataset.m;
  Matrix sums = Matrix::Zero(m, provider.d());
  std::vector<int> counts(static_cast<std::size_t>(m), 0);
  for (const auto& s : dataset.samples) {
    if (s.label < 0 || s.label >= m) throw RangeError("sample label out of range");
    sums.row(s.label) += provider.embedding(s.id).transpose();
    ++counts[static_cast<std::size_t>(s.label)];
  }
  for (int y = 0; y < m; ++y) {
    if (counts[static_cast<std::size_t>(y)] == 0) {
      throw DegenerateInputError("identity " + std::to_string(y) + " has no samples");
    }
    const double n = (sums.row(y) / counts[static_cast<std::size_t>(y)]).norm();
    if (!(n > 1e-12)) {
      throw DegenerateInputError("identity " + std::to_string(y) +
                                 " has a zero mean embedding (degenerate class)");
    }
  }
  return CodeVectorMatrix::from_rows(std::move(sums), m < 2);
}

void write_manifest(const std::filesystem::path& path, const LongTailDataset& dataset,
                    const std::string& config_hash) {
  nlohmann::json doc;
  doc["m"] = dataset.m;
  doc["samples"] = dataset.samples.size();
  doc["head_fraction"] = dataset.head_fraction;
  doc["head_count"] = dataset.head_count;
  doc["tail_count"] = dataset.tail_count;
  doc["counts"] = dataset.counts;
  doc["config_hash"] = config_hash;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << doc.dump(1) << '\n';
}

}  // namespace gif
