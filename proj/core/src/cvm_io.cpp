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

#include "gif/cvm_io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "gif/error.hpp"

namespace gif {
namespace {

static_assert(std::endian::native == std::endian::little,
              "CVM1 I/O assumes a little-endian host");

constexpr std::array<char, 4> kMagic = {'C', 'V', 'M', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw FormatError("CVM1: truncated header");
  return v;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode) {
  std::ofstream out(path, mode);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode) {
  std::ifstream in(path, mode);
  if (!in) throw FormatError("cannot open " + path.string());
  return in;
}

}  // namespace

void write_cvm(std::ostream& out, const Matrix& rows) {
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, static_cast<std::uint32_t>(rows.rows()));
  put_u32(out, static_cast<std::uint32_t>(rows.cols()));
  std::vector<float> buf(static_cast<std::size_t>(rows.cols()));
  for (Index i = 0; i < rows.rows(); ++i) {
    for (Index k = 0; k < rows.cols(); ++k) buf[static_cast<std::size_t>(k)] = static_cast<float>(rows(i, k));
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw FormatError("CVM1: write failed");
}

void write_cvm(const std::filesystem::path& path, const Matrix& rows) {
  auto out = open_out(path, std::ios::binary | std::ios::trunc);
  write_cvm(out, rows);
}

Matrix read_cvm(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw FormatError("CVM1: bad magic");
  }
  const std::uint32_t m = get_u32(in);
  const std::uint32_t d = get_u32(in);
  Matrix rows(static_cast<Index>(m), static_cast<Index>(d));
  std::vector<float> buf(d);
  for (std::uint32_t i = 0; i < m; ++i) {
    if (!in.read(reinterpret_cast<char*>(buf.data()),
                 static_cast<std::streamsize>(buf.size() * sizeof(float)))) {
      throw FormatError("CVM1: truncated body at row " + std::to_string(i));
    }
    for (std::uint32_t k = 0; k < d; ++k) rows(i, k) = buf[k];
  }
  return rows;
}

Matrix read_cvm(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::binary);
  return read_cvm(in);
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& rows) {
  auto out = open_out(path, std::ios::trunc);
  out.precision(std::numeric_limits<double>::max_digits10);
  for (Index i = 0; i < rows.rows(); ++i) {
    for (Index k = 0; k < rows.cols(); ++k) {
      if (k) out << ',';
      out << rows(i, k);
    }
    out << '\n';
  }
}

Matrix read_matrix_csv(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::in);
  std::vector<std::vector<double>> data;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw FormatError("CSV: bad number '" + cell + "' in " + path.string());
      }
    }
    if (!data.empty() && row.size() != data.front().size()) {
      throw FormatError("CSV: ragged row " + std::to_string(data.size()) + " in " + path.string());
    }
    data.push_back(std::move(row));
  }
  if (data.empty()) return Matrix(0, 0);
  Matrix rows(static_cast<Index>(data.size()), static_cast<Index>(data.front().size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t k = 0; k < data[i].size(); ++k) rows(static_cast<Index>(i), static_cast<Index>(k)) = data[i][k];
  }
  return rows;
}

CodeVectorMatrix load_code_vectors(const std::filesystem::path& path) {
  Matrix rows = path.extension() == ".csv" ? read_matrix_csv(path) : read_cvm(path);
  return CodeVectorMatrix::from_rows(std::move(rows), true);
}

void save_code_vectors(const std::filesystem::path& path, const CodeVectorMatrix& h) {
  if (path.extension() == ".csv") {
    write_matrix_csv(path, h.rows());
  } else {
    write_cvm(path, h.rows());
  }
}

}  // namespace gif
