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

#include "gif/checkpoint.hpp"

#include <array>
#include <bit>

#include "gif/error.hpp"
#include <nlohmann/json.hpp>

namespace gif {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr std::array<char, 4> kMagic = {'G', 'I', 'F', 'C'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kKindHeads = 0;
constexpr std::uint32_t kKindBaseline = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw FormatError("checkpoint truncated");
  return v;
}

void put_doubles(std::ostream& out, const double* data, Index n) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
}

void get_doubles(std::istream& in, double* data, Index n) {
  if (!in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)))) {
    throw FormatError("checkpoint truncated");
  }
}

// Row-major on disk, Eigen is column-major in memory.
void put_matrix(std::ostream& out, const Matrix& m) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  put_doubles(out, rm.data(), rm.size());
}

Matrix get_matrix(std::istream& in, Index rows, Index cols) {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
  get_doubles(in, rm.data(), rm.size());
  return rm;
}

void put_mlp(std::ostream& out, const Mlp& net) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& layer : net.layers()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(layer.out()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(layer.in()));
    put_matrix(out, layer.weight);
    put_doubles(out, layer.bias.data(), layer.bias.size());
  }
}

Mlp get_mlp(std::istream& in) {
  Mlp net;
  const auto count = get<std::uint32_t>(in);
  if (count > 1024) throw FormatError("checkpoint: implausible layer count");
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto out = get<std::uint32_t>(in);
    const auto inw = get<std::uint32_t>(in);
    Dense layer{get_matrix(in, out, inw), Vector(out)};
    get_doubles(in, layer.bias.data(), layer.bias.size());
    net.layers().push_back(std::move(layer));
  }
  return net;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (ckpt.heads.has_value() == ckpt.centroids.has_value()) {
    throw ConfigError("checkpoint holds exactly one of token heads or centroids");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, ckpt.heads ? kKindHeads : kKindBaseline);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.config_hash.size()));
  out.write(ckpt.config_hash.data(), static_cast<std::streamsize>(ckpt.config_hash.size()));
  put_mlp(out, ckpt.backbone.net());
  if (ckpt.heads) {
    const TokenHeads& h = *ckpt.heads;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(h.l));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(h.v));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(h.d));
    put<double>(out, h.scale_s);
    for (const auto& p : h.projections) put_mlp(out, p);
    for (const auto& u : h.classifiers) put_matrix(out, u);
  } else {
    const CentroidMatrix& c = *ckpt.centroids;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(c.d()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(c.m()));
    put<double>(out, c.scale_s);
    put_matrix(out, c.w);
  }
  if (!out) throw FormatError("checkpoint write failed");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw FormatError("checkpoint: bad magic in " + path.string());
  }
  if (get<std::uint32_t>(in) != kVersion) throw FormatError("checkpoint: unsupported version");
  const auto kind = get<std::uint32_t>(in);
  Checkpoint ckpt;
  const auto hash_len = get<std::uint32_t>(in);
  if (hash_len > 4096) throw FormatError("checkpoint: implausible hash length");
  ckpt.config_hash.resize(hash_len);
  if (!in.read(ckpt.config_hash.data(), hash_len)) throw FormatError("checkpoint truncated");
  ckpt.backbone.net() = get_mlp(in);
  if (kind == kKindHeads) {
    TokenHeads h;
    h.l = static_cast<int>(get<std::uint32_t>(in));
    h.v = static_cast<int>(get<std::uint32_t>(in));
    h.d = static_cast<Index>(get<std::uint32_t>(in));
    h.scale_s = get<double>(in);
    for (int j = 0; j < h.l; ++j) h.projections.push_back(get_mlp(in));
    for (int j = 0; j < h.l; ++j) h.classifiers.push_back(get_matrix(in, h.d, h.v));
    h.validate();
    ckpt.heads = std::move(h);
  } else if (kind == kKindBaseline) {
    CentroidMatrix c;
    const auto d = get<std::uint32_t>(in);
    const auto m = get<std::uint32_t>(in);
    c.scale_s = get<double>(in);
    c.w = get_matrix(in, d, m);
    ckpt.centroids = std::move(c);
  } else {
    throw FormatError("checkpoint: unknown kind");
  }
  return ckpt;
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path, std::string config_hash)
    : out_(path, std::ios::trunc), config_hash_(std::move(config_hash)) {
  if (!out_) throw FormatError("cannot open " + path.string() + " for writing");
}

void MetricsWriter::write(std::int64_t step, const LossBreakdown& loss) {
  nlohmann::json rec;
  rec["step"] = step;
  rec["loss"] = loss.total;
  rec["l_c"] = loss.l_c;
  rec["l_ar"] = loss.l_ar;
  rec["token_acc"] = loss.token_acc;
  rec["config_hash"] = config_hash_;
  out_ << rec.dump() << '\n';
}

}  // namespace gif
