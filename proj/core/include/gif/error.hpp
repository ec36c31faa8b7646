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

#include <stdexcept>
#include <string>

namespace gif {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Zero-norm vectors, empty classes and other inputs with no defined direction.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Token or label outside its valid range.
class RangeError : public Error {
 public:
  using Error::Error;
};

// Vocabulary v^l cannot hold the requested identities, or a tree node
// exceeds its per-depth capacity.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf encountered during optimization or training.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent artifact file.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace gif
