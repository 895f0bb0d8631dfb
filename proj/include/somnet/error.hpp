// Copyright 2026 The SOMNet Authors. All Rights Reserved.
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

#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace somnet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad or inconsistent configuration (unknown keys, out-of-range values).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data (JSONL records, checkpoints).
class DataError : public Error {
 public:
  using Error::Error;
};

/// The data is valid but lacks what the requested operation needs,
/// e.g. heatmap export on data without box geometry.
class UnsupportedDataError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: degenerate norms, non-finite losses.
class NumericError : public Error {
 public:
  using Error::Error;
};

namespace detail {

template <typename... Args>
std::string concat(Args&&... args) {
  std::ostringstream oss;
  (oss << ... << std::forward<Args>(args));
  return oss.str();
}

}  // namespace detail

}  // namespace somnet
