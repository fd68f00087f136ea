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

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "powq/tensor.hpp"

namespace powq {

inline constexpr double kMinExponent = 0.05;
inline constexpr double kMaxExponent = 2.0;
inline constexpr int kMinBits = 2;
inline constexpr int kMaxBits = 8;

/// Largest code magnitude of the symmetric b-bit range, 2^(b-1) - 1.
constexpr int max_code(int bits) { return (1 << (bits - 1)) - 1; }

/// Power quantizer settings. Rounding is always half away from zero.
struct QuantConfig {
  int bits = 8;
  double exponent = 1.0;
  Granularity granularity = Granularity::per_tensor();

  /// Throws ConfigError when bits or exponent are out of range.
  void validate() const;

  friend bool operator==(const QuantConfig&, const QuantConfig&) = default;
};

/// Integer codes plus per-group scales; the low-bit form of a tensor.
///
/// Scales live in the power-transformed domain: a code k dequantizes to
/// sign(k) * (|k| * scale)^(1/exponent).
struct QuantizedTensor {
  Shape shape;
  std::vector<std::int8_t> codes;
  std::vector<double> scales;
  double exponent = 1.0;
  int bits = 8;
  Granularity granularity = Granularity::per_tensor();

  QuantConfig config() const { return {bits, exponent, granularity}; }
  /// Checks the code range, scale positivity and sizes.
  void validate() const;
};

/// sign(x) * |x|^a
double power_transform(double x, double a);
Tensor power_transform(const Tensor& x, double a);

/// Inverse of power_transform applied to a scaled integer code.
double dequantize_value(std::int64_t code, double scale, double a);

/// Half-away-from-zero rounding of value / scale, clamped to +-max_code(bits).
std::int64_t quantize_value(double transformed, double scale, int bits);

/// Per-group scale max|x| / (2^(b-1) - 1); groups that are all zero get 1.
std::vector<double> compute_scale(const Tensor& x, int bits, Granularity granularity);
std::vector<double> compute_scale(std::span<const double> values, const GroupLayout& layout, int bits);

QuantizedTensor quantize(const Tensor& x, const QuantConfig& cfg);
/// Quantizes with externally frozen scales (one per group).
QuantizedTensor quantize_with_scales(const Tensor& x, const QuantConfig& cfg, std::span<const double> scales);

Tensor dequantize(const QuantizedTensor& q);
/// 64-bit dequantized values, before narrowing to tensor storage.
std::vector<double> dequantize_values(const QuantizedTensor& q);

Tensor fake_quantize(const Tensor& x, const QuantConfig& cfg);
Tensor fake_quantize_with_scales(const Tensor& x, const QuantConfig& cfg, std::span<const double> scales);

/// p-norm (p in {1, 2}) of x - fake_quantize(x), accumulated in 64-bit.
double reconstruction_error(const Tensor& x, const QuantConfig& cfg, int p);

enum class LevelFormat { uniform, power, log2, fp4_e2m1 };

LevelFormat level_format_from_string(const std::string& name);
std::string to_string(LevelFormat format);

/// All representable values on [-1, 1] at unit scale, ascending, deduplicated.
/// `exponent` is only read for LevelFormat::power.
std::vector<double> generate_levels(LevelFormat format, int bits, double exponent = 0.5);

// Binary layout: u64 LE header length, JSON header, int8 codes, f32 LE scales.
void write_quantized(std::ostream& os, const QuantizedTensor& q);
QuantizedTensor read_quantized(std::istream& is);
void save_quantized(const QuantizedTensor& q, const std::filesystem::path& path);
QuantizedTensor load_quantized(const std::filesystem::path& path);

}  // namespace powq
