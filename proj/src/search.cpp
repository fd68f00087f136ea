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

#include "powq/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "powq/error.hpp"

namespace powq {

void SearchConfig::validate() const {
  if (!(lower < upper) || lower < kMinExponent || upper > kMaxExponent) {
    throw ConfigError("search bounds must satisfy 0.05 <= lower < upper <= 2");
  }
  if (!(init >= lower && init <= upper)) throw ConfigError("search init must lie inside the bounds");
  if (!(tolerance > 0.0)) throw ConfigError("search tolerance must be positive");
  if (!(initial_step > 0.0)) throw ConfigError("initial simplex step must be positive");
  if (max_iterations < 1) throw ConfigError("max iterations must be at least 1");
  if (p != 1 && p != 2) throw ConfigError("norm p must be 1 or 2");
  if (bits < kMinBits || bits > kMaxBits) throw ConfigError("bits must be in [2, 8]");
}

double exponent_objective(std::span<const Tensor> weights, double a, int bits, int p) {
  if (weights.empty()) throw ConfigError("exponent objective needs at least one weight tensor");
  const QuantConfig cfg{bits, a, Granularity::per_tensor()};
  double total = 0.0;
  for (const auto& w : weights) total += reconstruction_error(w, cfg, p);
  return total;
}

namespace {

struct Vertex {
  double a;
  double f;
};

class SimplexSearch {
 public:
  SimplexSearch(const std::function<double(double)>& objective, const SearchConfig& cfg)
      : objective_(objective), cfg_(cfg) {}

  Vertex eval(double a) {
    a = std::clamp(a, cfg_.lower, cfg_.upper);
    const double f = objective_(a);
    ++result_.evaluations;
    if (!std::isfinite(f)) {
      std::ostringstream os;
      os << "objective is not finite at a = " << a;
      throw NumericError(os.str());
    }
    if (f < best_.f) best_ = {a, f};
    return {a, f};
  }

  // Runs one simplex descent from `start`; returns when the simplex collapses
  // below tolerance or the iteration budget is spent.
  void descend(Vertex start) {
    double second = start.a + cfg_.initial_step;
    if (second > cfg_.upper) second = start.a - cfg_.initial_step;
    Vertex v[2] = {start, eval(second)};
    while (result_.iterations < cfg_.max_iterations) {
      if (v[1].f < v[0].f) std::swap(v[0], v[1]);
      record(v);
      if (std::abs(v[1].a - v[0].a) < cfg_.tolerance) return;
      ++result_.iterations;

      const Vertex& best = v[0];
      const Vertex& worst = v[1];
      const Vertex r = eval(best.a + (best.a - worst.a));
      if (r.f < best.f) {
        const Vertex e = eval(best.a + 2.0 * (best.a - worst.a));
        v[1] = e.f < r.f ? e : r;
      } else if (r.f < worst.f) {
        const Vertex c = eval(best.a + 0.5 * (r.a - best.a));
        v[1] = c.f <= r.f ? c : r;
        // Projection can park the reflected point on the best vertex.
        if (v[1].a == best.a) v[1] = eval(best.a + 0.5 * (worst.a - best.a));
      } else {
        // Inside contraction; in one dimension the shrink step lands on the
        // same point.
        v[1] = eval(best.a + 0.5 * (worst.a - best.a));
      }
    }
    if (v[1].f < v[0].f) std::swap(v[0], v[1]);
    record(v);
  }

  SearchResult run() {
    best_ = {0.0, std::numeric_limits<double>::infinity()};
    Vertex start = eval(cfg_.init);
    descend(start);
    for (int r = 0; r < cfg_.max_restarts && result_.iterations < cfg_.max_iterations; ++r) {
      const double before = best_.f;
      descend(best_);
      if (!(best_.f < before)) break;
    }
    result_.a = best_.a;
    result_.error = best_.f;
    return std::move(result_);
  }

 private:
  void record(const Vertex (&v)[2]) {
    SearchTraceEntry e;
    e.iteration = result_.iterations;
    e.simplex[0][0] = v[0].a;
    e.simplex[0][1] = v[0].f;
    e.simplex[1][0] = v[1].a;
    e.simplex[1][1] = v[1].f;
    e.best_a = best_.a;
    e.best_error = best_.f;
    result_.trace.push_back(e);
  }

  const std::function<double(double)>& objective_;
  const SearchConfig& cfg_;
  Vertex best_{0.0, std::numeric_limits<double>::infinity()};
  SearchResult result_;
};

}  // namespace

SearchResult nelder_mead_min(const std::function<double(double)>& objective, const SearchConfig& cfg) {
  cfg.validate();
  SimplexSearch search(objective, cfg);
  return search.run();
}

ProbeResult grid_probe(const std::function<double(double)>& objective, double lower, double upper, double step,
                       double window) {
  if (!(step > 0.0)) throw ConfigError("probe step must be positive");
  if (!(upper >= lower)) throw ConfigError("probe range is empty");
  ProbeResult probe;
  const auto count = static_cast<std::size_t>(std::floor((upper - lower) / step + 1e-9)) + 1;
  for (std::size_t i = 0; i < count; ++i) {
    const double a = lower + static_cast<double>(i) * step;
    const double f = objective(a);
    if (!std::isfinite(f)) throw NumericError("probe objective is not finite");
    probe.a.push_back(a);
    probe.error.push_back(f);
  }
  const auto& e = probe.error;
  probe.argmin = static_cast<std::size_t>(std::min_element(e.begin(), e.end()) - e.begin());

  std::size_t positive = 0;
  for (std::size_t i = 1; i + 1 < count; ++i) {
    if (std::abs(probe.a[i] - probe.a[probe.argmin]) > window + 1e-12) continue;
    ++probe.second_differences;
    positive += (e[i + 1] - 2.0 * e[i] + e[i - 1]) > 0.0;
  }
  probe.convex_fraction =
      probe.second_differences ? static_cast<double>(positive) / static_cast<double>(probe.second_differences) : 0.0;

  double runner_up = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < count; ++i) {
    if (i != probe.argmin) runner_up = std::min(runner_up, e[i]);
  }
  probe.runner_up_gap = count > 1 ? runner_up - e[probe.argmin] : 0.0;
  return probe;
}

DataFreeResult powerquant_datafree(const ModelSpec& model, const SearchConfig& cfg) {
  model.validate();
  std::vector<Tensor> weights;
  for (const auto& layer : model.layers) weights.push_back(layer.weight);
  const auto objective = [&](double a) { return exponent_objective(weights, a, cfg.bits, cfg.p); };

  DataFreeResult out;
  out.search = nelder_mead_min(objective, cfg);
  out.a_shared = out.search.a;
  out.error = out.search.error;
  out.fake_quantized = model;
  const QuantConfig qc{cfg.bits, out.a_shared, Granularity::per_tensor()};
  for (auto& layer : out.fake_quantized.layers) {
    out.weights.push_back(quantize(layer.weight, qc));
    layer.weight = dequantize(out.weights.back());
  }
  return out;
}

}  // namespace powq
