// Copyright (c) 2026 The powq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace powq {

// Base of every error thrown by the library. `kind()` is a short stable tag
// used by the CLI for machine-parseable diagnostics.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& w) : Error("shape", w) {}
};

struct ValueError : Error {
  explicit ValueError(const std::string& w) : Error("value", w) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error("config", w) {}
};

// Non-finite objective, gradient or loss during an optimization loop.
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error("numeric", w) {}
};

struct ManifestError : Error {
  explicit ManifestError(const std::string& w) : Error("manifest", w) {}
};

struct DimensionChainError : Error {
  explicit DimensionChainError(const std::string& w) : Error("dimension_chain", w) {}
};

struct TruncatedBlobError : Error {
  explicit TruncatedBlobError(const std::string& w) : Error("truncated_blob", w) {}
};

struct IoError : Error {
  explicit IoError(const std::string& w) : Error("io", w) {}
};

// Activation quantization requested without frozen scales.
struct PolicyError : Error {
  explicit PolicyError(const std::string& w) : Error("policy", w) {}
};

struct FixtureError : Error {
  explicit FixtureError(const std::string& w) : Error("fixture", w) {}
};

}  // namespace powq
