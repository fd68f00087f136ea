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

#include <functional>
#include <span>
#include <vector>

#include "powq/model.hpp"
#include "powq/quant.hpp"

namespace powq {

struct SearchConfig {
  double init = 0.5;
  /// Initial simplex edge: the second vertex starts at init + step.
  double initial_step = 0.1;
  double tolerance = 1e-4;
  int max_iterations = 200;
  /// Fresh-simplex restarts from the incumbent while they keep improving.
  int max_restarts = 5;
  int bits = 4;
  int p = 2;
  double lower = kMinExponent;
  double upper = kMaxExponent;

  void validate() const;
};

struct SearchTraceEntry {
  int iteration = 0;
  double simplex[2][2]{};  // {a, error} per vertex, best first
  double best_a = 0.0;
  double best_error = 0.0;
};

struct SearchResult {
  double a = 0.0;
  double error = 0.0;
  int iterations = 0;
  int evaluations = 0;
  std::vector<SearchTraceEntry> trace;
};

/// Sum over tensors of the per-tensor reconstruction error at exponent a.
double exponent_objective(std::span<const Tensor> weights, double a, int bits, int p);

/// One-dimensional Nelder-Mead over [lower, upper] with projection.
/// Throws NumericError when the objective returns a non-finite value.
SearchResult nelder_mead_min(const std::function<double(double)>& objective, const SearchConfig& cfg);

struct ProbeResult {
  std::vector<double> a;
  std::vector<double> error;
  std::size_t argmin = 0;
  /// Share of positive second differences with centre within `window` of argmin.
  double convex_fraction = 0.0;
  std::size_t second_differences = 0;
  /// Gap between the best and second-best sample.
  double runner_up_gap = 0.0;

  double best_a() const { return a[argmin]; }
  double best_error() const { return error[argmin]; }
};

ProbeResult grid_probe(const std::function<double(double)>& objective, double lower, double upper, double step,
                       double window = 0.05);

struct DataFreeResult {
  double a_shared = 1.0;
  double error = 0.0;
  SearchResult search;
  std::vector<QuantizedTensor> weights;
  /// The model with every weight replaced by its power-quantized value.
  ModelSpec fake_quantized;
};

/// Shared-exponent search over every layer weight, then per-tensor power
/// quantization of all layers with that exponent.
DataFreeResult powerquant_datafree(const ModelSpec& model, const SearchConfig& cfg);

}  // namespace powq
