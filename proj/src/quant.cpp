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

#include "powq/quant.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "json.hpp"

#include "powq/error.hpp"

namespace powq {

using json = nlohmann::json;

void QuantConfig::validate() const {
  if (bits < kMinBits || bits > kMaxBits) {
    throw ConfigError("bits must be in [2, 8], got " + std::to_string(bits));
  }
  if (!(exponent >= kMinExponent && exponent <= kMaxExponent)) {
    throw ConfigError("exponent must be in [0.05, 2], got " + std::to_string(exponent));
  }
  if (granularity.kind == Granularity::Kind::per_group && granularity.group_size < 2) {
    throw ConfigError("group size must be at least 2");
  }
}

void QuantizedTensor::validate() const {
  config().validate();
  if (codes.size() != shape_numel(shape)) throw ShapeError("code count does not match shape " + shape_to_string(shape));
  const GroupLayout layout(shape, granularity);
  if (scales.size() != layout.num_groups()) {
    throw ShapeError("expected " + std::to_string(layout.num_groups()) + " scales, got " +
                     std::to_string(scales.size()));
  }
  const int limit = max_code(bits);
  for (std::int8_t c : codes) {
    if (c < -limit || c > limit) throw ValueError("code " + std::to_string(c) + " outside symmetric range");
  }
  for (double s : scales) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ValueError("scales must be positive and finite");
  }
}

double power_transform(double x, double a) { return std::copysign(std::pow(std::abs(x), a), x); }

Tensor power_transform(const Tensor& x, double a) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = power_transform(static_cast<double>(x[i]), a);
  return Tensor::from_doubles(x.shape(), out);
}

double dequantize_value(std::int64_t code, double scale, double a) {
  if (code == 0) return 0.0;
  const double magnitude = std::pow(static_cast<double>(code < 0 ? -code : code) * scale, 1.0 / a);
  return code < 0 ? -magnitude : magnitude;
}

std::int64_t quantize_value(double transformed, double scale, int bits) {
  const double limit = max_code(bits);
  const double r = std::clamp(std::round(transformed / scale), -limit, limit);
  return static_cast<std::int64_t>(r);
}

std::vector<double> compute_scale(std::span<const double> values, const GroupLayout& layout, int bits) {
  auto scales = reduce_max_abs(values, layout);
  const double denom = max_code(bits);
  for (double& s : scales) s = s > 0.0 ? s / denom : 1.0;
  return scales;
}

std::vector<double> compute_scale(const Tensor& x, int bits, Granularity granularity) {
  const GroupLayout layout(x.shape(), granularity);
  const auto values = x.to_doubles();
  return compute_scale(values, layout, bits);
}

namespace {

std::vector<double> transformed_values(const Tensor& x, double a) {
  std::vector<double> t(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) t[i] = power_transform(static_cast<double>(x[i]), a);
  return t;
}

QuantizedTensor encode(const Tensor& x, const QuantConfig& cfg, std::span<const double> t, const GroupLayout& layout,
                       std::vector<double> scales) {
  QuantizedTensor q;
  q.shape = x.shape();
  q.bits = cfg.bits;
  q.exponent = cfg.exponent;
  q.granularity = cfg.granularity;
  q.codes.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    q.codes[i] = static_cast<std::int8_t>(quantize_value(t[i], scales[layout.group_of(i)], cfg.bits));
  }
  q.scales = std::move(scales);
  return q;
}

}  // namespace

QuantizedTensor quantize(const Tensor& x, const QuantConfig& cfg) {
  cfg.validate();
  const GroupLayout layout(x.shape(), cfg.granularity);
  const auto t = transformed_values(x, cfg.exponent);
  return encode(x, cfg, t, layout, compute_scale(t, layout, cfg.bits));
}

QuantizedTensor quantize_with_scales(const Tensor& x, const QuantConfig& cfg, std::span<const double> scales) {
  cfg.validate();
  const GroupLayout layout(x.shape(), cfg.granularity);
  if (scales.size() != layout.num_groups()) throw ShapeError("frozen scale count does not match granularity");
  for (double s : scales) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ValueError("frozen scales must be positive and finite");
  }
  const auto t = transformed_values(x, cfg.exponent);
  return encode(x, cfg, t, layout, {scales.begin(), scales.end()});
}

std::vector<double> dequantize_values(const QuantizedTensor& q) {
  const GroupLayout layout(q.shape, q.granularity);
  std::vector<double> out(q.codes.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = dequantize_value(q.codes[i], q.scales[layout.group_of(i)], q.exponent);
  }
  return out;
}

Tensor dequantize(const QuantizedTensor& q) { return Tensor::from_doubles(q.shape, dequantize_values(q)); }

Tensor fake_quantize(const Tensor& x, const QuantConfig& cfg) { return dequantize(quantize(x, cfg)); }

Tensor fake_quantize_with_scales(const Tensor& x, const QuantConfig& cfg, std::span<const double> scales) {
  return dequantize(quantize_with_scales(x, cfg, scales));
}

double reconstruction_error(const Tensor& x, const QuantConfig& cfg, int p) {
  if (p != 1 && p != 2) throw ConfigError("norm p must be 1 or 2, got " + std::to_string(p));
  const Tensor fq = fake_quantize(x, cfg);
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(fq[i]);
    acc += p == 1 ? std::abs(d) : d * d;
  }
  return p == 1 ? acc : std::sqrt(acc);
}

LevelFormat level_format_from_string(const std::string& name) {
  if (name == "uniform") return LevelFormat::uniform;
  if (name == "power") return LevelFormat::power;
  if (name == "log2") return LevelFormat::log2;
  if (name == "fp4" || name == "fp4-e2m1" || name == "fp4_e2m1") return LevelFormat::fp4_e2m1;
  throw ConfigError("unsupported level format '" + name + "'");
}

std::string to_string(LevelFormat format) {
  switch (format) {
    case LevelFormat::uniform: return "uniform";
    case LevelFormat::power: return "power";
    case LevelFormat::log2: return "log2";
    case LevelFormat::fp4_e2m1: return "fp4-e2m1";
  }
  return "unknown";
}

std::vector<double> generate_levels(LevelFormat format, int bits, double exponent) {
  std::vector<double> magnitudes;
  if (format == LevelFormat::fp4_e2m1) {
    if (bits != 4) throw ConfigError("fp4-e2m1 levels require bits = 4");
    // e2m1 with subnormals: 0, 0.5 | 1, 1.5 | 2, 3 | 4, 6; normalized by the max.
    for (double v : {0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0}) magnitudes.push_back(v / 6.0);
  } else {
    if (bits < kMinBits || bits > kMaxBits) throw ConfigError("bits must be in [2, 8] for " + to_string(format));
    const int top = max_code(bits);
    switch (format) {
      case LevelFormat::uniform:
        for (int k = 0; k <= top; ++k) magnitudes.push_back(static_cast<double>(k) / top);
        break;
      case LevelFormat::power:
        if (!(exponent >= kMinExponent && exponent <= kMaxExponent)) {
          throw ConfigError("exponent must be in [0.05, 2]");
        }
        for (int k = 0; k <= top; ++k) magnitudes.push_back(std::pow(static_cast<double>(k) / top, 1.0 / exponent));
        break;
      case LevelFormat::log2:
        // sign + (b-1)-bit exponent field; one pattern reserved for zero.
        magnitudes.push_back(0.0);
        for (int k = 0; k < top; ++k) magnitudes.push_back(std::ldexp(1.0, -k));
        break;
      case LevelFormat::fp4_e2m1: break;
    }
  }
  std::vector<double> levels;
  for (double m : magnitudes) {
    levels.push_back(m);
    levels.push_back(-m);
  }
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  return levels;
}

namespace {

constexpr const char* kQuantizedFormat = "powq.qtensor";

void put_u64_le(std::ostream& os, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(buf, 8);
}

void put_f32_le(std::ostream& os, float f) {
  const auto v = std::bit_cast<std::uint32_t>(f);
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(buf, 4);
}

void read_exact(std::istream& is, char* dst, std::size_t n, const char* what) {
  is.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) {
    throw TruncatedBlobError(std::string("quantized tensor truncated while reading ") + what);
  }
}

}  // namespace

void write_quantized(std::ostream& os, const QuantizedTensor& q) {
  q.validate();
  json header = {
      {"format", kQuantizedFormat},
      {"format_version", 1},
      {"shape", q.shape},
      {"bits", q.bits},
      {"exponent", q.exponent},
      {"granularity", to_string(q.granularity.kind)},
      {"group_size", q.granularity.group_size},
      {"num_scales", q.scales.size()},
  };
  const std::string text = header.dump();
  put_u64_le(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  os.write(reinterpret_cast<const char*>(q.codes.data()), static_cast<std::streamsize>(q.codes.size()));
  for (double s : q.scales) put_f32_le(os, static_cast<float>(s));
}

QuantizedTensor read_quantized(std::istream& is) {
  unsigned char len_bytes[8];
  read_exact(is, reinterpret_cast<char*>(len_bytes), 8, "header length");
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(len_bytes[i]) << (8 * i);
  if (len > (1u << 24)) throw ManifestError("quantized tensor header length is implausible");
  std::string text(len, '\0');
  read_exact(is, text.data(), len, "header");

  QuantizedTensor q;
  std::size_t num_scales = 0;
  try {
    const json header = json::parse(text);
    if (header.at("format").get<std::string>() != kQuantizedFormat) throw ManifestError("not a quantized tensor file");
    q.shape = header.at("shape").get<Shape>();
    q.bits = header.at("bits").get<int>();
    q.exponent = header.at("exponent").get<double>();
    q.granularity.kind = granularity_kind_from_string(header.at("granularity").get<std::string>());
    q.granularity.group_size = header.at("group_size").get<std::size_t>();
    num_scales = header.at("num_scales").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ManifestError(std::string("malformed quantized tensor header: ") + e.what());
  }
  if (q.shape.empty() || shape_numel(q.shape) == 0) throw ManifestError("quantized tensor shape is empty");

  q.codes.resize(shape_numel(q.shape));
  read_exact(is, reinterpret_cast<char*>(q.codes.data()), q.codes.size(), "codes");
  q.scales.resize(num_scales);
  for (double& s : q.scales) {
    unsigned char b[4];
    read_exact(is, reinterpret_cast<char*>(b), 4, "scales");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    s = static_cast<double>(std::bit_cast<float>(v));
  }
  q.validate();
  return q;
}

void save_quantized(const QuantizedTensor& q, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  write_quantized(os, q);
  if (!os) throw IoError("failed writing '" + path.string() + "'");
}

QuantizedTensor load_quantized(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  return read_quantized(is);
}

}  // namespace powq
