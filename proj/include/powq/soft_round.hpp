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

#include <span>
#include <string>
#include <vector>

#include "powq/tensor.hpp"

namespace powq {

inline constexpr double kGradientClipFloor = 1e-6;

/// clip(1.2 * logistic(eps) - 0.1, 0, 1)
double rectified_sigmoid(double eps);
/// Zero where the clip is active.
double rectified_sigmoid_grad(double eps);

/// Sum over elements of lambda * (1 - |2 sigma(eps) - 1|^beta).
double adaround_regularizer(std::span<const double> eps, double lambda, double beta);
/// d regularizer / d sigma for one element.
double adaround_regularizer_grad_sigma(double sigma, double lambda, double beta);

/// Soft rounding: tanh(beta (e - 1/2 - floor e)) / (2 tanh(beta / 2)) + floor e + 1/2.
/// Fixes every integer for any beta > 0.
double dsq(double eps, double beta);
/// Derivative of dsq, with the floor treated as locally constant.
double dsq_grad(double eps, double beta);

/// Steepness schedule beta(s) over S steps.
class BetaScheduler {
 public:
  enum class Kind { adaround_cosine, constant, power };

  static BetaScheduler adaround_cosine(long total_steps);
  static BetaScheduler constant(double c, long total_steps = 1);
  static BetaScheduler power(double c, long total_steps);
  /// "adaround", "const:C" or "power:C".
  static BetaScheduler parse(const std::string& spec, long total_steps);

  double operator()(long step) const;

  Kind kind() const noexcept { return kind_; }
  double c() const noexcept { return c_; }
  long total_steps() const noexcept { return total_; }
  BetaScheduler with_total_steps(long total_steps) const;
  std::string to_string() const;

  /// power(c) is 0 at s = 0; values are floored here to stay positive.
  static constexpr double kMinBeta = 1e-3;

 private:
  BetaScheduler(Kind kind, double c, long total);

  Kind kind_;
  double c_;
  long total_;
};

/// Per-element derivative of sign(x)|x|^a w.r.t. a on the clipped magnitude:
/// s(x) * max(|x|, floor)^a * ln max(|x|, floor), with s(x) = -1 for x < 0
/// and +1 otherwise (so zero inputs keep the clipped value).
double power_jacobian(double x, double a, double floor = kGradientClipFloor);

struct ExponentGradient {
  double from_inputs = 0.0;
  double from_weights = 0.0;
  double total() const { return from_inputs + from_weights; }
};

/// Gradient of the loss w.r.t. the shared exponent of a layer.
///
/// `grad_x` and `grad_w` are the upstream loss gradients w.r.t. the
/// power-transformed input and weight. Each contribution is averaged over
/// its own element count before the two are added. Scales are treated as
/// constants. Throws NumericError naming the tensor on a non-finite result.
ExponentGradient exponent_backward(std::span<const double> x, std::span<const double> grad_x,
                                   std::span<const double> w, std::span<const double> grad_w, double a,
                                   double floor = kGradientClipFloor);
ExponentGradient exponent_backward(const Tensor& x, const Tensor& w, double a, std::span<const double> grad_x,
                                   std::span<const double> grad_w);

}  // namespace powq
