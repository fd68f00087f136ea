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

// Independent reference implementations used as test oracles. Nothing here
// calls into the library's numeric code paths.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "powq/tensor.hpp"

namespace powq::oracle {

inline Tensor gaussian(Shape shape, std::uint64_t seed, double sigma = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, sigma);
  std::vector<float> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<float>(nd(rng));
  return Tensor(std::move(shape), std::move(v));
}

// Triple loop, row-major, 64-bit accumulation.
inline std::vector<double> matmul(const Tensor& x, const Tensor& w) {
  const std::size_t b = x.shape()[0], n = x.shape()[1], m = w.shape()[1];
  std::vector<double> y(b * m, 0.0);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += double(x.data()[i * n + k]) * double(w.data()[k * m + j]);
      y[i * m + j] = acc;
    }
  return y;
}

inline double max_abs_scan(std::span<const float> v) {
  double m = 0.0;
  for (float x : v) m = std::max(m, std::fabs(double(x)));
  return m;
}

// Plain symmetric uniform quantizer: s = max|x| / (2^(b-1) - 1), codes are
// round-half-away(x / s) clamped to +-(2^(b-1) - 1), dequant is code * s.
struct Uniform {
  std::vector<int> codes;
  double scale = 1.0;
  std::vector<float> dequant;
};

inline Uniform uniform_quantize(std::span<const float> v, int bits) {
  const int top = (1 << (bits - 1)) - 1;
  Uniform u;
  const double m = max_abs_scan(v);
  u.scale = m > 0.0 ? m / top : 1.0;
  for (float x : v) {
    const double r = double(x) / u.scale;
    double q = std::trunc(r);
    if (std::fabs(r - q) >= 0.5) q += (r > 0 ? 1.0 : -1.0);
    const int c = static_cast<int>(std::clamp(q, double(-top), double(top)));
    u.codes.push_back(c);
    u.dequant.push_back(static_cast<float>(c * u.scale));
  }
  return u;
}

// Power quantizer written out directly for one tensor, per-tensor scale.
inline std::vector<float> power_fake_quant(std::span<const float> v, int bits, double a) {
  const int top = (1 << (bits - 1)) - 1;
  std::vector<double> t(v.size());
  double m = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = v[i];
    t[i] = (x < 0 ? -1.0 : 1.0) * std::pow(std::fabs(x), a);
    m = std::max(m, std::fabs(t[i]));
  }
  const double s = m > 0.0 ? m / top : 1.0;
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double c = std::clamp(std::round(t[i] / s), double(-top), double(top));
    out[i] = static_cast<float>(c == 0 ? 0.0 : (c < 0 ? -1.0 : 1.0) * std::pow(std::fabs(c) * s, 1.0 / a));
  }
  return out;
}

inline double l2_error(std::span<const float> x, std::span<const float> q) {
  long double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const long double d = (long double)x[i] - (long double)q[i];
    acc += d * d;
  }
  return static_cast<double>(std::sqrt(acc));
}

// Soft rounding evaluated in extended precision, for finite differences.
inline long double dsq_ld(long double e, long double beta) {
  const long double fl = std::floor(e);
  return std::tanh(beta * (e - 0.5L - fl)) / (2.0L * std::tanh(beta / 2.0L)) + fl + 0.5L;
}

inline double dsq_slope_fd(double e, double beta, long double h = 1e-7L) {
  return static_cast<double>((dsq_ld(e + h, beta) - dsq_ld(e - h, beta)) / (2.0L * h));
}

// Central difference of f at x.
template <class F>
double central_diff(F f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double rel_err(double got, double want) {
  const double d = std::fabs(got - want);
  return want == 0.0 ? d : d / std::fabs(want);
}

}  // namespace powq::oracle
