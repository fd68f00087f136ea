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

#include <cmath>
#include <algorithm>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "powq/error.hpp"
#include "powq/quant.hpp"

using namespace powq;

TEST_SUITE("quant") {

TEST_CASE("config validation") {
  CHECK_NOTHROW((QuantConfig{4, 0.5, Granularity::per_tensor()}.validate()));
  CHECK_THROWS_AS((QuantConfig{1, 0.5, Granularity::per_tensor()}.validate()), ConfigError);
  CHECK_THROWS_AS((QuantConfig{9, 0.5, Granularity::per_tensor()}.validate()), ConfigError);
  CHECK_THROWS_AS((QuantConfig{4, 0.01, Granularity::per_tensor()}.validate()), ConfigError);
  CHECK_THROWS_AS((QuantConfig{4, 2.5, Granularity::per_tensor()}.validate()), ConfigError);
  CHECK_THROWS_AS((QuantConfig{4, 1.0, Granularity::per_group(1)}.validate()), ConfigError);
  CHECK(max_code(4) == 7);
  CHECK(max_code(8) == 127);
  CHECK(max_code(2) == 1);
}

TEST_CASE("compute_scale") {
  CHECK(compute_scale(Tensor({3}, {-3, 1, 2}), 8, Granularity::per_tensor())[0] == 3.0 / 127.0);
  CHECK(compute_scale(Tensor::zeros({5}), 4, Granularity::per_tensor())[0] == 1.0);
  const Tensor g = oracle::gaussian({4096}, 11);
  CHECK(compute_scale(g, 4, Granularity::per_tensor())[0] == oracle::max_abs_scan(g.data()) / 7.0);
}

TEST_CASE("power_transform") {
  CHECK(power_transform(4.0, 0.5) == 2.0);
  CHECK(power_transform(-0.25, 0.5) == -0.5);
  CHECK(power_transform(0.0, 0.3) == 0.0);
  CHECK(power_transform(1.0, 0.3) == 1.0);
  CHECK(power_transform(-1.0, 1.7) == -1.0);
  const Tensor g = oracle::gaussian({257}, 3);
  CHECK(power_transform(g, 1.0) == g);
}

TEST_CASE("quantize worked examples") {
  const auto q = quantize(Tensor({3}, {0.25f, 1.0f, 4.0f}), {4, 0.5, Granularity::per_tensor()});
  CHECK(q.scales[0] == doctest::Approx(2.0 / 7.0).epsilon(1e-15));
  CHECK(q.codes == std::vector<std::int8_t>{2, 4, 7});

  const auto u = quantize(Tensor({3}, {-3, 1, 2}), {8, 1.0, Granularity::per_tensor()});
  CHECK(u.codes == std::vector<std::int8_t>{-127, 42, 85});

  const auto z = quantize(Tensor({4}, {0, 1, 0, -1}), {3, 0.7, Granularity::per_tensor()});
  CHECK(z.codes[0] == 0);
  CHECK(z.codes[2] == 0);
}

TEST_CASE("dequantize worked examples") {
  const auto q = quantize(Tensor({3}, {0.25f, 1.0f, 4.0f}), {4, 0.5, Granularity::per_tensor()});
  const auto d = dequantize_values(q);
  CHECK(d[0] == doctest::Approx(std::pow(4.0 / 7.0, 2)).epsilon(1e-14));
  CHECK(d[1] == doctest::Approx(std::pow(8.0 / 7.0, 2)).epsilon(1e-14));
  CHECK(d[2] == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(dequantize_value(0, 0.37, 0.2) == 0.0);
  // the extremum survives a round trip
  const Tensor g = oracle::gaussian({1000}, 5);
  for (double a : {0.3, 0.5, 1.0, 1.6}) {
    const auto qg = quantize(g, {4, a, Granularity::per_tensor()});
    const auto dg = dequantize_values(qg);
    double best = 0;
    for (std::size_t i = 0; i < dg.size(); ++i) {
      if (std::abs(qg.codes[i]) == 7) best = std::max(best, std::fabs(dg[i]));
    }
    CHECK(best == doctest::Approx(oracle::max_abs_scan(g.data())).epsilon(1e-12));
  }
}

TEST_CASE("a = 1 is bit-identical to the plain uniform quantizer") {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<std::size_t> len(1, 300);
  std::uniform_real_distribution<double> sd(1e-3, 10.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const int bits = 2 + trial % 7;
    const Tensor x = oracle::gaussian({len(rng)}, 1000 + trial, sd(rng));
    const auto want = oracle::uniform_quantize(x.data(), bits);
    const auto q = quantize(x, {bits, 1.0, Granularity::per_tensor()});
    REQUIRE(q.scales[0] == want.scale);
    for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(int(q.codes[i]) == want.codes[i]);
    const Tensor fq = fake_quantize(x, {bits, 1.0, Granularity::per_tensor()});
    for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(fq[i] == want.dequant[i]);
  }
}

TEST_CASE("half-away rounding on ties") {
  // transformed values 1, 3.5/7*... built so t/s hits k + 0.5 exactly
  const auto q = quantize(Tensor({3}, {7.0f, 3.5f, -3.5f}), {4, 1.0, Granularity::per_tensor()});
  CHECK(q.codes == std::vector<std::int8_t>{7, 4, -4});
  CHECK(quantize_value(2.5, 1.0, 4) == 3);
  CHECK(quantize_value(-2.5, 1.0, 4) == -3);
  CHECK(quantize_value(100.0, 1.0, 4) == 7);
  CHECK(quantize_value(-100.0, 1.0, 4) == -7);
}

TEST_CASE("monotonicity, sign preservation and code range") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ad(kMinExponent, kMaxExponent);
  for (int trial = 0; trial < 300; ++trial) {
    const int bits = 2 + trial % 7;
    const double a = ad(rng);
    const Tensor x = oracle::gaussian({512}, 50 + trial, trial % 3 == 0 ? 100.0 : 1.0);
    const auto q = quantize(x, {bits, a, Granularity::per_tensor()});
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto i, auto j) { return x[i] < x[j]; });
    for (std::size_t k = 1; k < idx.size(); ++k) REQUIRE(q.codes[idx[k - 1]] <= q.codes[idx[k]]);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const int c = q.codes[i];
      REQUIRE(std::abs(c) <= max_code(bits));
      if (c != 0) REQUIRE((c > 0) == (x[i] > 0));
    }
  }
}

TEST_CASE("fake_quantize is idempotent and stays within one step") {
  for (int trial = 0; trial < 200; ++trial) {
    const int bits = 2 + trial % 7;
    const double a = 0.1 + 0.009 * trial;
    const Tensor x = oracle::gaussian({300}, 900 + trial);
    const QuantConfig cfg{bits, a, trial % 2 ? Granularity::per_group(100) : Granularity::per_tensor()};
    const Tensor once = fake_quantize(x, cfg);
    REQUIRE(fake_quantize(once, cfg) == once);
    if (cfg.granularity.kind == Granularity::Kind::per_tensor) {
      // neighbouring dequantized levels bracket every input
      const double s = compute_scale(power_transform(x, a), bits, cfg.granularity)[0];
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double t = std::fabs(power_transform(double(x[i]), a)) / s;
        const double lo = std::pow(std::max(0.0, std::floor(t)) * s, 1 / a);
        const double hi = std::pow(std::min<double>(max_code(bits), std::ceil(t)) * s, 1 / a);
        REQUIRE(std::fabs(once[i]) >= float(lo) * (1 - 1e-6));
        REQUIRE(std::fabs(once[i]) <= float(hi) * (1 + 1e-6));
      }
    }
  }
}

TEST_CASE("representable tensors are fixed points") {
  // a = 1 grid including both extrema
  std::vector<float> v;
  for (int k = -7; k <= 7; ++k) v.push_back(0.25f * k);
  const Tensor grid({v.size()}, v);
  CHECK(fake_quantize(grid, {4, 1.0, Granularity::per_tensor()}) == grid);
  CHECK(reconstruction_error(grid, {4, 1.0, Granularity::per_tensor()}, 2) == 0.0);
  // a = 0.5 grid: values (k/7)^2 * 4
  std::vector<float> p;
  for (int k = -7; k <= 7; ++k) p.push_back(float((k < 0 ? -1 : 1) * std::pow(std::abs(k) / 7.0 * 2.0, 2.0)));
  const Tensor pg({p.size()}, p);
  const Tensor fq = fake_quantize(pg, {4, 0.5, Granularity::per_tensor()});
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(fq[i] == doctest::Approx(p[i]).epsilon(1e-6));
}

TEST_CASE("reconstruction error") {
  const Tensor g = oracle::gaussian({4096}, 21);
  const double e1 = reconstruction_error(g, {4, 1.0, Granularity::per_tensor()}, 2);
  const auto u = oracle::uniform_quantize(g.data(), 4);
  CHECK(e1 == doctest::Approx(oracle::l2_error(g.data(), u.dequant)).epsilon(1e-12));
  const double e05 = reconstruction_error(g, {4, 0.5, Granularity::per_tensor()}, 2);
  CHECK(e05 < e1);
  const auto pq = oracle::power_fake_quant(g.data(), 4, 0.5);
  CHECK(e05 == doctest::Approx(oracle::l2_error(g.data(), pq)).epsilon(1e-12));
  CHECK_THROWS_AS(reconstruction_error(g, {4, 1.0, Granularity::per_tensor()}, 3), ConfigError);
  double l1 = 0;
  for (std::size_t i = 0; i < g.size(); ++i) l1 += std::fabs(double(g[i]) - double(u.dequant[i]));
  CHECK(reconstruction_error(g, {4, 1.0, Granularity::per_tensor()}, 1) == doctest::Approx(l1).epsilon(1e-12));
}

TEST_CASE("automorphism identity on random positive pairs") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> ld(-20.0, 20.0);
  std::uniform_real_distribution<double> ad(kMinExponent, kMaxExponent);
  double worst = 0;
  for (int i = 0; i < 100000; ++i) {
    const double x = std::exp(ld(rng)), y = std::exp(ld(rng)), a = ad(rng);
    worst = std::max(worst, oracle::rel_err(power_transform(x * y, a), power_transform(x, a) * power_transform(y, a)));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("multiplicative dequant consistency is exhaustive at 4 bits") {
  double worst = 0;
  for (double a : {0.05, 0.25, 0.5, 0.77, 1.0, 1.5, 2.0}) {
    for (double sx : {0.013, 0.5, 2.0 / 7.0}) {
      for (double sw : {0.0071, 1.0, 3.3}) {
        for (int kx = -7; kx <= 7; ++kx) {
          for (int kw = -7; kw <= 7; ++kw) {
            const double prod = dequantize_value(kx, sx, a) * dequantize_value(kw, sw, a);
            const double joint = dequantize_value(std::int64_t(kx) * kw, sx * sw, a);
            if (kx == 0 || kw == 0) {
              REQUIRE(prod == 0.0);
              REQUIRE(joint == 0.0);
            } else {
              worst = std::max(worst, oracle::rel_err(joint, prod));
            }
          }
        }
      }
    }
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("per-group never loses to per-tensor") {
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 256 * (1 + trial % 8);
    const Tensor g = oracle::gaussian({n}, 300 + trial);
    for (double a : {0.5, 1.0}) {
      CHECK(reconstruction_error(g, {4, a, Granularity::per_group(128)}, 2) <=
            reconstruction_error(g, {4, a, Granularity::per_tensor()}, 2));
    }
  }
}

TEST_CASE("generate_levels") {
  const auto u = generate_levels(LevelFormat::uniform, 4);
  REQUIRE(u.size() == 15);
  for (int k = -7; k <= 7; ++k) CHECK(u[k + 7] == doctest::Approx(k / 7.0).epsilon(1e-15));
  const auto p = generate_levels(LevelFormat::power, 4, 0.5);
  REQUIRE(p.size() == 15);
  for (int k = -7; k <= 7; ++k) {
    CHECK(p[k + 7] == doctest::Approx((k < 0 ? -1 : 1) * std::pow(std::abs(k) / 7.0, 2.0)).epsilon(1e-14));
  }
  CHECK(p[8] - p[7] < u[8] - u[7]);  // denser near zero
  const auto l = generate_levels(LevelFormat::log2, 4);
  REQUIRE(l.size() == 15);
  CHECK(l[7] == 0.0);
  for (int k = 0; k <= 6; ++k) {
    CHECK(std::find(l.begin(), l.end(), std::ldexp(1.0, -k)) != l.end());
    CHECK(std::find(l.begin(), l.end(), -std::ldexp(1.0, -k)) != l.end());
  }
  const auto f = generate_levels(LevelFormat::fp4_e2m1, 4);
  CHECK(f.size() == 15);
  CHECK(f.back() == 1.0);
  CHECK(std::is_sorted(f.begin(), f.end()));
  CHECK_THROWS_AS(generate_levels(LevelFormat::fp4_e2m1, 3), ConfigError);
  CHECK_THROWS_AS(level_format_from_string("posit"), ConfigError);
  CHECK(level_format_from_string("fp4") == LevelFormat::fp4_e2m1);
}

TEST_CASE("quantized tensor serialization") {
  const Tensor x = oracle::gaussian({16, 8}, 77);
  const auto q = quantize(x, {3, 0.6, Granularity::per_channel()});
  std::stringstream ss;
  write_quantized(ss, q);
  const std::string blob = ss.str();
  std::istringstream is(blob);
  const auto r = read_quantized(is);
  CHECK(r.shape == q.shape);
  CHECK(r.codes == q.codes);
  CHECK(r.bits == q.bits);
  CHECK(r.exponent == q.exponent);
  CHECK(r.granularity == q.granularity);
  REQUIRE(r.scales.size() == q.scales.size());
  for (std::size_t i = 0; i < r.scales.size(); ++i) CHECK(r.scales[i] == double(float(q.scales[i])));

  std::istringstream cut(blob.substr(0, blob.size() - 3));
  CHECK_THROWS_AS(read_quantized(cut), TruncatedBlobError);
  std::string bad = blob;
  bad[10] = '#';
  std::istringstream bs(bad);
  CHECK_THROWS_AS(read_quantized(bs), ManifestError);
}

}
