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
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "powq/adam.hpp"
#include "powq/model.hpp"
#include "powq/quant.hpp"
#include "powq/soft_round.hpp"

namespace powq {

enum class OptMode { learn_w, learn_a, learn_wa };
enum class RoundingMethod { dsq, adaround };

std::string to_string(OptMode mode);
OptMode opt_mode_from_string(const std::string& name);  // "w", "a", "wa"
std::string to_string(RoundingMethod method);
RoundingMethod rounding_method_from_string(const std::string& name);  // "nupes"/"dsq", "adaround"

struct OptConfig {
  long steps = 10000;
  std::size_t batch_size = 32;
  std::size_t calibration_samples = 1024;
  double lr_eps = 1e-3;
  double lr_a = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  /// Steepness of the soft rounding; the step count is taken from `steps`.
  BetaScheduler dsq_beta = BetaScheduler::constant(20.0);
  /// AdaRound regularizer weight after the warm-up fraction of steps.
  double lambda = 0.01;
  double lambda_warmup = 0.2;
  double clip_floor = kGradientClipFloor;
  OptMode mode = OptMode::learn_w;
  RoundingMethod method = RoundingMethod::dsq;
  /// Starting exponent for every layer.
  double init_a = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Persistent optimization state of one layer under soft-rounding learning.
///
/// The only weight-shaped parameter is `eps`, the weight expressed in code
/// units of the power-transformed domain.
struct LayerOptState {
  std::vector<double> eps;
  AdamMoments eps_moments;
  double a = 0.5;
  AdamMoments a_moments{1};
  long step = 0;
  /// Transformed-domain scales after the last update (never differentiated).
  double weight_scale = 1.0;
  double activation_scale = 1.0;

  /// Weight-shaped parameter buffers, by name and element count.
  std::vector<std::pair<std::string, std::size_t>> weight_shaped_parameters() const {
    return {{"eps", eps.size()}};
  }
  std::size_t persistent_bytes() const {
    return sizeof(double) * (eps.size() + eps_moments.m.size() + eps_moments.v.size() + 3);
  }
};

/// AdaRound baseline state: floored codes plus the rounding variable.
struct AdaRoundState {
  std::vector<double> floored;
  std::vector<double> eps;
  AdamMoments eps_moments;
  double a = 1.0;
  long step = 0;
  double weight_scale = 1.0;
  double activation_scale = 1.0;

  std::vector<std::pair<std::string, std::size_t>> weight_shaped_parameters() const {
    return {{"floored", floored.size()}, {"eps", eps.size()}};
  }
  std::size_t persistent_bytes() const {
    return sizeof(double) * (floored.size() + eps.size() + eps_moments.m.size() + eps_moments.v.size());
  }
};

struct LayerOptResult {
  QuantizedTensor codes;
  double exponent = 1.0;
  std::optional<double> activation_scale;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  /// True when the learned solution lost to the starting point and was dropped.
  bool kept_initial = false;
  long steps = 0;
  double seconds = 0.0;
};

/// Shared plumbing of the layer-wise optimizers: calibration tensors,
/// full-precision targets, batching, and hard-code evaluation.
class LayerProblem {
 public:
  LayerProblem(const DenseLayer& layer, const Tensor& x_fp, const Tensor& x_q, int weight_bits,
               std::optional<int> activation_bits, const OptConfig& cfg);

  const DenseLayer& layer() const { return layer_; }
  int weight_bits() const { return weight_bits_; }
  std::optional<int> activation_bits() const { return activation_bits_; }
  std::size_t rows() const { return rows_; }
  const OptConfig& config() const { return cfg_; }

  /// Transformed-domain activation scale over all calibration rows.
  std::optional<double> frozen_activation_scale(double a) const;
  /// Mean squared error of the layer output on the whole calibration set,
  /// with hard codes and frozen activation scales.
  double hard_loss(const QuantizedTensor& codes) const;

  /// Next minibatch of row indices (reshuffled each pass).
  std::vector<std::size_t> next_batch();

  /// Quantized batch input and the per-batch scale used for it.
  struct BatchInput {
    std::vector<double> raw;        // x_q rows, [b x in]
    std::vector<double> quantized;  // fake-quantized (or raw when unquantized)
    std::vector<double> dequant_base;  // |code| * scale per element, for the chain rule
    double scale = 1.0;
  };
  BatchInput batch_input(std::span<const std::size_t> rows, double a) const;
  std::vector<double> batch_target(std::span<const std::size_t> rows) const;

 private:
  const DenseLayer& layer_;
  std::vector<double> x_q_;
  std::vector<double> y_fp_;
  std::size_t rows_, in_, out_;
  int weight_bits_;
  std::optional<int> activation_bits_;
  OptConfig cfg_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

/// Soft-rounding weight learning (and optionally exponent learning) for one
/// layer. `step()` advances one minibatch; `finish()` hard-rounds.
class DsqLayerOptimizer {
 public:
  DsqLayerOptimizer(const DenseLayer& layer, const Tensor& x_fp, const Tensor& x_q, int weight_bits,
                    std::optional<int> activation_bits, const OptConfig& cfg);

  const LayerOptState& state() const { return state_; }
  const LayerProblem& problem() const { return problem_; }

  /// One optimizer step on the given rows; returns the batch loss before the update.
  double step(std::span<const std::size_t> rows);
  double step() { return step(problem_.next_batch()); }
  /// Runs the remaining steps and returns the hard-rounded result.
  LayerOptResult run();
  /// Hard codes implied by the current state.
  QuantizedTensor current_codes() const;
  double initial_loss() const { return initial_loss_; }

 private:
  LayerProblem problem_;
  LayerOptState state_;
  double initial_a_;
  double initial_loss_ = 0.0;
};

class AdaRoundLayerOptimizer {
 public:
  AdaRoundLayerOptimizer(const DenseLayer& layer, const Tensor& x_fp, const Tensor& x_q, int weight_bits,
                         std::optional<int> activation_bits, const OptConfig& cfg);

  const AdaRoundState& state() const { return state_; }
  /// Returns {distillation loss, regularizer} of the batch before the update.
  std::pair<double, double> step(std::span<const std::size_t> rows);
  LayerOptResult run();
  QuantizedTensor current_codes() const;
  double lambda_at(long step) const;
  double initial_loss() const { return initial_loss_; }

 private:
  LayerProblem problem_;
  AdaRoundState state_;
  BetaScheduler reg_beta_;
  double initial_loss_ = 0.0;
};

LayerOptResult optimize_layer_nupes(const DenseLayer& layer, const Tensor& x_fp, const Tensor& x_q, int weight_bits,
                                    std::optional<int> activation_bits, const OptConfig& cfg);
LayerOptResult optimize_layer_adaround(const DenseLayer& layer, const Tensor& x_fp, const Tensor& x_q,
                                       int weight_bits, std::optional<int> activation_bits, const OptConfig& cfg);

struct LayerReport {
  std::size_t layer = 0;
  std::string mode;
  std::string method;
  long steps = 0;
  std::string beta_scheduler;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double learned_a = 0.0;
  double seconds = 0.0;
  bool kept_initial = false;
};

struct ModelOptResult {
  QuantPolicy policy;
  std::vector<LayerReport> report;
};

/// Layer-by-layer optimization against the full-precision intermediate
/// features; each layer sees inputs produced by the already-quantized prefix.
ModelOptResult optimize_model(const ModelSpec& model, const Tensor& calib, const PolicyOptions& bits,
                              const OptConfig& cfg);

std::string report_to_json(const std::vector<LayerReport>& report);

}  // namespace powq
