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

// Code-vector matrix files.
//
// Binary layout (little-endian):
//   "CVM1"  4 bytes magic
//   u32     m
//   u32     d
//   f32     m * d values, row-major
//
// The CSV form holds one row per line, d comma-separated values.

#include <filesystem>
#include <iosfwd>

#include "gif/sphere.hpp"

namespace gif {

void write_cvm(std::ostream& out, const Matrix& rows);
void write_cvm(const std::filesystem::path& path, const Matrix& rows);

/// Reads the raw float32 matrix. Throws FormatError on bad magic or a
/// truncated body.
Matrix read_cvm(std::istream& in);
Matrix read_cvm(const std::filesystem::path& path);

void write_matrix_csv(const std::filesystem::path& path, const Matrix& rows);
Matrix read_matrix_csv(const std::filesystem::path& path);

/// Loads either format, chosen by extension (".csv" -> CSV, else CVM1), and
/// normalizes rows into a CodeVectorMatrix.
CodeVectorMatrix load_code_vectors(const std::filesystem::path& path);
void save_code_vectors(const std::filesystem::path& path, const CodeVectorMatrix& h);

}  // namespace gif
