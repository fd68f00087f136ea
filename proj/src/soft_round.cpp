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

#include "powq/soft_round.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "powq/error.hpp"

namespace powq {

double rectified_sigmoid(double eps) {
  const double logistic = 1.0 / (1.0 + std::exp(-eps));
  return std::clamp(logistic * 1.2 - 0.1, 0.0, 1.0);
}

double rectified_sigmoid_grad(double eps) {
  const double logistic = 1.0 / (1.0 + std::exp(-eps));
  const double raw = logistic * 1.2 - 0.1;
  if (raw <= 0.0 || raw >= 1.0) return 0.0;
  return 1.2 * logistic * (1.0 - logistic);
}

double adaround_regularizer(std::span<const double> eps, double lambda, double beta) {
  if (lambda == 0.0) return 0.0;
  double total = 0.0;
  for (double e : eps) total += 1.0 - std::pow(std::abs(2.0 * rectified_sigmoid(e) - 1.0), beta);
  return lambda * total;
}

double adaround_regularizer_grad_sigma(double sigma, double lambda, double beta) {
  const double centred = 2.0 * sigma - 1.0;
  if (lambda == 0.0 || centred == 0.0) return 0.0;
  const double slope = beta * std::pow(std::abs(centred), beta - 1.0);
  return -lambda * 2.0 * std::copysign(slope, centred);
}

double dsq(double eps, double beta) {
  const double fl = std::floor(eps);
  return std::tanh(beta * (eps - 0.5 - fl)) / (2.0 * std::tanh(beta / 2.0)) + fl + 0.5;
}

double dsq_grad(double eps, double beta) {
  const double fl = std::floor(eps);
  const double c = std::cosh(beta * (eps - 0.5 - fl));
  return beta / (c * c) / (2.0 * std::tanh(beta / 2.0));
}

BetaScheduler::BetaScheduler(Kind kind, double c, long total) : kind_(kind), c_(c), total_(total) {
  if (total_ < 1) throw ConfigError("beta scheduler needs at least one step");
  if (kind_ == Kind::constant && !(c_ > 0.0)) throw ConfigError("constant beta must be positive");
  if (kind_ == Kind::power && !(c_ >= 0.0)) throw ConfigError("power scheduler exponent must be non-negative");
}

BetaScheduler BetaScheduler::adaround_cosine(long total_steps) { return {Kind::adaround_cosine, 0.0, total_steps}; }
BetaScheduler BetaScheduler::constant(double c, long total_steps) { return {Kind::constant, c, total_steps}; }
BetaScheduler BetaScheduler::power(double c, long total_steps) { return {Kind::power, c, total_steps}; }

BetaScheduler BetaScheduler::with_total_steps(long total_steps) const { return {kind_, c_, total_steps}; }

BetaScheduler BetaScheduler::parse(const std::string& spec, long total_steps) {
  if (spec == "adaround" || spec == "adaround-cosine") return adaround_cosine(total_steps);
  const auto colon = spec.find(':');
  if (colon != std::string::npos) {
    const std::string kind = spec.substr(0, colon);
    double c = 0.0;
    try {
      std::size_t used = 0;
      c = std::stod(spec.substr(colon + 1), &used);
      if (used != spec.size() - colon - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError("bad scheduler constant in '" + spec + "'");
    }
    if (kind == "const") return constant(c, total_steps);
    if (kind == "power") return power(c, total_steps);
  }
  throw ConfigError("unknown scheduler '" + spec + "' (expected adaround, const:C or power:C)");
}

double BetaScheduler::operator()(long step) const {
  if (step < 0 || step > total_) {
    throw ConfigError("scheduler step " + std::to_string(step) + " outside [0, " + std::to_string(total_) + "]");
  }
  const double progress = static_cast<double>(step) / static_cast<double>(total_);
  switch (kind_) {
    case Kind::adaround_cosine: return 20.0 + (-18.0 / 2.0) * (1.0 + std::cos(progress * std::numbers::pi));
    case Kind::constant: return c_;
    case Kind::power: return std::max(20.0 * std::pow(progress, c_), kMinBeta);
  }
  return c_;
}

std::string BetaScheduler::to_string() const {
  std::ostringstream os;
  switch (kind_) {
    case Kind::adaround_cosine: os << "adaround"; break;
    case Kind::constant: os << "const:" << c_; break;
    case Kind::power: os << "power:" << c_; break;
  }
  return os.str();
}

double power_jacobian(double x, double a, double floor) {
  const double m = std::max(std::abs(x), floor);
  const double j = std::pow(m, a) * std::log(m);
  return x < 0.0 ? -j : j;
}

namespace {

double balanced_term(std::span<const double> values, std::span<const double> grads, double a, double floor,
                     const char* name) {
  if (values.size() != grads.size()) {
    throw ShapeError(std::string("upstream gradient size does not match the ") + name);
  }
  if (values.empty()) return 0.0;
  std::vector<double> terms(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) terms[i] = grads[i] * power_jacobian(values[i], a, floor);
  const double mean = exact_sum(terms) / static_cast<double>(values.size());
  if (!std::isfinite(mean)) throw NumericError(std::string("non-finite exponent gradient from the ") + name);
  return mean;
}

}  // namespace

ExponentGradient exponent_backward(std::span<const double> x, std::span<const double> grad_x,
                                   std::span<const double> w, std::span<const double> grad_w, double a,
                                   double floor) {
  return {balanced_term(x, grad_x, a, floor, "inputs"), balanced_term(w, grad_w, a, floor, "weights")};
}

ExponentGradient exponent_backward(const Tensor& x, const Tensor& w, double a, std::span<const double> grad_x,
                                   std::span<const double> grad_w) {
  if (x.rank() != 2 || w.rank() != 2 || x.cols() != w.rows()) {
    throw ShapeError("exponent_backward expects x[B x N] and w[N x M], got " + shape_to_string(x.shape()) + " and " +
                     shape_to_string(w.shape()));
  }
  const auto xv = x.to_doubles();
  const auto wv = w.to_doubles();
  return exponent_backward(xv, grad_x, wv, grad_w, a);
}

}  // namespace powq
