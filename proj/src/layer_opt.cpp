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

#include "powq/layer_opt.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "powq/error.hpp"

namespace powq {

std::string to_string(OptMode mode) {
  switch (mode) {
    case OptMode::learn_w: return "w";
    case OptMode::learn_a: return "a";
    case OptMode::learn_wa: return "wa";
  }
  return "unknown";
}

OptMode opt_mode_from_string(const std::string& name) {
  if (name == "w") return OptMode::learn_w;
  if (name == "a") return OptMode::learn_a;
  if (name == "wa") return OptMode::learn_wa;
  throw ConfigError("unknown mode '" + name + "' (expected w, a or wa)");
}

std::string to_string(RoundingMethod method) { return method == RoundingMethod::dsq ? "nupes" : "adaround"; }

RoundingMethod rounding_method_from_string(const std::string& name) {
  if (name == "nupes" || name == "dsq") return RoundingMethod::dsq;
  if (name == "adaround") return RoundingMethod::adaround;
  throw ConfigError("unknown method '" + name + "' (expected nupes or adaround)");
}

void OptConfig::validate() const {
  if (steps < 1) throw ConfigError("steps must be at least 1");
  if (batch_size == 0 || calibration_samples == 0) throw ConfigError("batch size and samples must be positive");
  if (batch_size > calibration_samples) throw ConfigError("batch size exceeds calibration samples");
  if (!(lr_eps > 0.0) || !(lr_a > 0.0)) throw ConfigError("learning rates must be positive");
  if (!(init_a >= kMinExponent && init_a <= kMaxExponent)) throw ConfigError("init exponent must be in [0.05, 2]");
  if (!(clip_floor > 0.0)) throw ConfigError("clip floor must be positive");
  if (!(lambda_warmup >= 0.0 && lambda_warmup <= 1.0)) throw ConfigError("lambda warm-up must be a fraction");
  if (method == RoundingMethod::adaround && mode != OptMode::learn_w) {
    throw ConfigError("the adaround baseline only learns weights");
  }
}

namespace {

using Clock = std::chrono::steady_clock;

// y[r x out] = x[r x in] . w[in x out]
std::vector<double> matmul_d(std::span<const double> x, std::size_t rows, std::size_t in, std::span<const double> w,
                             std::size_t out) {
  std::vector<double> y(rows * out, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < in; ++k) {
      const double xv = x[r * in + k];
      if (xv == 0.0) continue;
      const double* wrow = w.data() + k * out;
      double* yrow = y.data() + r * out;
      for (std::size_t c = 0; c < out; ++c) yrow[c] += xv * wrow[c];
    }
  }
  return y;
}

double transformed_scale(std::span<const double> values, double a, int bits) {
  std::vector<double> t(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) t[i] = power_transform(values[i], a);
  return compute_scale(t, GroupLayout({t.size()}, Granularity::per_tensor()), bits)[0];
}

// sign(d) * (|d| * scale)^(1/a) for a continuous code d.
double dequantize_continuous(double d, double scale, double a) {
  if (d == 0.0) return 0.0;
  return std::copysign(std::pow(std::abs(d) * scale, 1.0 / a), d);
}

// d/dT of the dequantized value at base = |code| * scale (straight-through).
double dequant_slope(double base, double a, double floor) {
  return std::pow(std::max(base, floor), 1.0 / a - 1.0) / a;
}

QuantizedTensor make_codes(const Shape& shape, std::vector<std::int8_t> codes, double scale, double a, int bits) {
  QuantizedTensor q;
  q.shape = shape;
  q.codes = std::move(codes);
  q.scales = {scale};
  q.exponent = a;
  q.bits = bits;
  q.granularity = Granularity::per_tensor();
  return q;
}

struct Forward {
  std::vector<double> w_hat;
  LayerProblem::BatchInput input;
  std::vector<double> residual;
  double loss = 0.0;
};

// Shared forward for both optimizers; `codes` are continuous codes.
Forward forward_batch(const LayerProblem& problem, std::span<const std::size_t> rows, std::span<const double> codes,
                      double scale, double a) {
  const auto& layer = problem.layer();
  const std::size_t in = layer.in_dim(), out = layer.out_dim(), bt = rows.size();
  Forward f;
  f.w_hat.resize(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) f.w_hat[i] = dequantize_continuous(codes[i], scale, a);
  f.input = problem.batch_input(rows, a);
  auto y = matmul_d(f.input.quantized, bt, in, f.w_hat, out);
  const auto target = problem.batch_target(rows);
  f.residual.resize(y.size());
  double acc = 0.0;
  for (std::size_t r = 0; r < bt; ++r) {
    for (std::size_t c = 0; c < out; ++c) {
      const std::size_t i = r * out + c;
      f.residual[i] = y[i] + static_cast<double>(layer.bias[c]) - target[i];
      acc += f.residual[i] * f.residual[i];
    }
  }
  f.loss = acc / static_cast<double>(y.size());
  return f;
}

// dL/dW_hat = x_hat^T . dL/dY with L the mean squared residual.
std::vector<double> weight_gradient(const Forward& f, std::size_t bt, std::size_t in, std::size_t out) {
  const double norm = 2.0 / static_cast<double>(bt * out);
  std::vector<double> g(in * out, 0.0);
  for (std::size_t r = 0; r < bt; ++r) {
    for (std::size_t k = 0; k < in; ++k) {
      const double xv = f.input.quantized[r * in + k] * norm;
      if (xv == 0.0) continue;
      for (std::size_t c = 0; c < out; ++c) g[k * out + c] += xv * f.residual[r * out + c];
    }
  }
  return g;
}

}  // namespace

// ---------------------------------------------------------------------------

LayerProblem::LayerProblem(const DenseLayer& layer, const Tensor& x_fp, const Tensor& x_q, int weight_bits,
                           std::optional<int> activation_bits, const OptConfig& cfg)
    : layer_(layer),
      in_(layer.in_dim()),
      out_(layer.out_dim()),
      weight_bits_(weight_bits),
      activation_bits_(activation_bits),
      cfg_(cfg),
      rng_(cfg.seed) {
  cfg_.validate();
  QuantConfig{weight_bits, cfg.init_a, Granularity::per_tensor()}.validate();
  if (activation_bits) QuantConfig{*activation_bits, cfg.init_a, Granularity::per_tensor()}.validate();
  if (x_fp.rank() != 2 || x_q.rank() != 2 || x_fp.shape() != x_q.shape() || x_fp.cols() != in_) {
    throw ShapeError("calibration inputs " + shape_to_string(x_fp.shape()) + " / " + shape_to_string(x_q.shape()) +
                     " do not match layer input dim " + std::to_string(in_));
  }
  rows_ = std::min(x_fp.rows(), cfg.calibration_samples);
  if (cfg_.batch_size > rows_) cfg_.batch_size = rows_;

  const auto xq_all = x_q.data();
  x_q_.assign(xq_all.begin(), xq_all.begin() + static_cast<std::ptrdiff_t>(rows_ * in_));
  const auto xfp_all = x_fp.data();
  const std::vector<double> x_fp_d(xfp_all.begin(), xfp_all.begin() + static_cast<std::ptrdiff_t>(rows_ * in_));
  y_fp_ = matmul_d(x_fp_d, rows_, in_, layer.weight.to_doubles(), out_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < out_; ++c) y_fp_[r * out_ + c] += static_cast<double>(layer.bias[c]);
  }
  order_.resize(rows_);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::shuffle(order_.begin(), order_.end(), rng_);
}

std::optional<double> LayerProblem::frozen_activation_scale(double a) const {
  if (!activation_bits_) return std::nullopt;
  return transformed_scale(x_q_, a, *activation_bits_);
}

double LayerProblem::hard_loss(const QuantizedTensor& codes) const {
  const double a = codes.exponent;
  std::vector<double> x = x_q_;
  if (activation_bits_) {
    const double s = *frozen_activation_scale(a);
    for (double& v : x) v = dequantize_value(quantize_value(power_transform(v, a), s, *activation_bits_), s, a);
  }
  const auto w = dequantize_values(codes);
  const auto y = matmul_d(x, rows_, in_, w, out_);
  double acc = 0.0;
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < out_; ++c) {
      const double d = y[r * out_ + c] + static_cast<double>(layer_.bias[c]) - y_fp_[r * out_ + c];
      acc += d * d;
    }
  }
  return acc / static_cast<double>(rows_ * out_);
}

std::vector<std::size_t> LayerProblem::next_batch() {
  std::vector<std::size_t> batch;
  batch.reserve(cfg_.batch_size);
  while (batch.size() < cfg_.batch_size) {
    if (cursor_ == order_.size()) {
      std::shuffle(order_.begin(), order_.end(), rng_);
      cursor_ = 0;
    }
    batch.push_back(order_[cursor_++]);
  }
  return batch;
}

LayerProblem::BatchInput LayerProblem::batch_input(std::span<const std::size_t> rows, double a) const {
  BatchInput b;
  b.raw.resize(rows.size() * in_);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy_n(x_q_.begin() + static_cast<std::ptrdiff_t>(rows[r] * in_), in_,
                b.raw.begin() + static_cast<std::ptrdiff_t>(r * in_));
  }
  if (!activation_bits_) {
    b.quantized = b.raw;
    return b;
  }
  b.scale = transformed_scale(b.raw, a, *activation_bits_);
  b.quantized.resize(b.raw.size());
  b.dequant_base.resize(b.raw.size());
  for (std::size_t i = 0; i < b.raw.size(); ++i) {
    const auto k = quantize_value(power_transform(b.raw[i], a), b.scale, *activation_bits_);
    b.quantized[i] = dequantize_value(k, b.scale, a);
    b.dequant_base[i] = static_cast<double>(k < 0 ? -k : k) * b.scale;
  }
  return b;
}

std::vector<double> LayerProblem::batch_target(std::span<const std::size_t> rows) const {
  std::vector<double> t(rows.size() * out_);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy_n(y_fp_.begin() + static_cast<std::ptrdiff_t>(rows[r] * out_), out_,
                t.begin() + static_cast<std::ptrdiff_t>(r * out_));
  }
  return t;
}

// ---------------------------------------------------------------------------

DsqLayerOptimizer::DsqLayerOptimizer(const DenseLayer& layer, const Tensor& x_fp, const Tensor& x_q, int weight_bits,
                                     std::optional<int> activation_bits, const OptConfig& cfg)
    : problem_(layer, x_fp, x_q, weight_bits, activation_bits, cfg), initial_a_(cfg.init_a) {
  const auto w = layer.weight.to_doubles();
  state_.a = cfg.init_a;
  state_.weight_scale = transformed_scale(w, state_.a, weight_bits);
  state_.eps.resize(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) state_.eps[i] = power_transform(w[i], state_.a) / state_.weight_scale;
  state_.eps_moments = AdamMoments(w.size());
  state_.activation_scale = problem_.frozen_activation_scale(state_.a).value_or(1.0);
  initial_loss_ = problem_.hard_loss(quantize(layer.weight, {weight_bits, state_.a, Granularity::per_tensor()}));
}

double DsqLayerOptimizer::step(std::span<const std::size_t> rows) {
  const auto& cfg = problem_.config();
  const auto& layer = problem_.layer();
  const std::size_t in = layer.in_dim(), out = layer.out_dim(), bt = rows.size();
  const int bits = problem_.weight_bits();
  const double limit = max_code(bits);
  const double a = state_.a;
  const double beta = cfg.dsq_beta.with_total_steps(cfg.steps)(std::min(state_.step, cfg.steps));
  const bool learn_w = cfg.mode != OptMode::learn_a;
  const bool learn_a = cfg.mode != OptMode::learn_w;
  const auto w = layer.weight.to_doubles();
  const double s_w = state_.weight_scale;

  std::vector<double> codes(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    codes[i] = learn_w ? std::clamp(dsq(state_.eps[i], beta), -limit, limit)
                       : static_cast<double>(quantize_value(power_transform(w[i], a), s_w, bits));
  }
  const Forward f = forward_batch(problem_, rows, codes, s_w, a);
  if (!std::isfinite(f.loss)) {
    throw NumericError("layer loss diverged at step " + std::to_string(state_.step));
  }
  const auto g_w = weight_gradient(f, bt, in, out);

  if (learn_w) {
    std::vector<double> g_eps(w.size(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double soft = dsq(state_.eps[i], beta);
      if (soft < -limit || soft > limit) continue;
      const double slope = s_w * dequant_slope(std::abs(codes[i]) * s_w, a, cfg.clip_floor);
      g_eps[i] = g_w[i] * slope * dsq_grad(state_.eps[i], beta);
    }
    adam_step({cfg.lr_eps, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon}, state_.eps, g_eps, state_.eps_moments);
  }

  if (learn_a) {
    std::vector<double> g_tw(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
      g_tw[i] = g_w[i] * dequant_slope(std::abs(codes[i]) * s_w, a, cfg.clip_floor);
    }
    std::vector<double> g_tx(bt * in, 0.0);
    if (problem_.activation_bits()) {
      const double norm = 2.0 / static_cast<double>(bt * out);
      for (std::size_t r = 0; r < bt; ++r) {
        for (std::size_t k = 0; k < in; ++k) {
          double acc = 0.0;
          for (std::size_t c = 0; c < out; ++c) acc += f.residual[r * out + c] * f.w_hat[k * out + c];
          g_tx[r * in + k] = acc * norm * dequant_slope(f.input.dequant_base[r * in + k], a, cfg.clip_floor);
        }
      }
    }
    const auto grad = exponent_backward(f.input.raw, g_tx, w, g_tw, a, cfg.clip_floor);
    double a_param = state_.a;
    const double g_a = grad.total();
    adam_step({cfg.lr_a, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon}, std::span<double>(&a_param, 1),
              std::span<const double>(&g_a, 1), state_.a_moments);
    state_.a = std::clamp(a_param, kMinExponent, kMaxExponent);
  }

  ++state_.step;
  // update scale (no gradient) for the new exponent
  state_.weight_scale = transformed_scale(w, state_.a, bits);
  if (!learn_w) {
    for (std::size_t i = 0; i < w.size(); ++i) state_.eps[i] = power_transform(w[i], state_.a) / state_.weight_scale;
  }
  if (problem_.activation_bits()) {
    state_.activation_scale = transformed_scale(f.input.raw, state_.a, *problem_.activation_bits());
  }
  return f.loss;
}

QuantizedTensor DsqLayerOptimizer::current_codes() const {
  const int bits = problem_.weight_bits();
  const double limit = max_code(bits);
  std::vector<std::int8_t> codes(state_.eps.size());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    codes[i] = static_cast<std::int8_t>(std::clamp(std::round(state_.eps[i]), -limit, limit));
  }
  return make_codes(problem_.layer().weight.shape(), std::move(codes), state_.weight_scale, state_.a, bits);
}

LayerOptResult DsqLayerOptimizer::run() {
  const auto start = Clock::now();
  const auto& cfg = problem_.config();
  while (state_.step < cfg.steps) step();

  LayerOptResult result;
  result.steps = state_.step;
  result.initial_loss = initial_loss_;
  result.codes = current_codes();
  result.final_loss = problem_.hard_loss(result.codes);
  if (!(result.final_loss <= initial_loss_)) {
    result.kept_initial = true;
    result.codes = quantize(problem_.layer().weight, {problem_.weight_bits(), initial_a_, Granularity::per_tensor()});
    result.final_loss = initial_loss_;
  }
  result.exponent = result.codes.exponent;
  result.activation_scale = problem_.frozen_activation_scale(result.exponent);
  result.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return result;
}

// ---------------------------------------------------------------------------

AdaRoundLayerOptimizer::AdaRoundLayerOptimizer(const DenseLayer& layer, const Tensor& x_fp, const Tensor& x_q,
                                               int weight_bits, std::optional<int> activation_bits,
                                               const OptConfig& cfg)
    : problem_(layer, x_fp, x_q, weight_bits, activation_bits, cfg),
      reg_beta_(BetaScheduler::adaround_cosine(cfg.steps)) {
  const auto w = layer.weight.to_doubles();
  state_.a = cfg.init_a;
  state_.weight_scale = transformed_scale(w, state_.a, weight_bits);
  state_.floored.resize(w.size());
  state_.eps.resize(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double v = power_transform(w[i], state_.a) / state_.weight_scale;
    state_.floored[i] = std::floor(v);
    // invert the rectified sigmoid so that floor + sigma(eps) reproduces v
    const double p = (v - state_.floored[i] + 0.1) / 1.2;
    state_.eps[i] = std::log(p / (1.0 - p));
  }
  state_.eps_moments = AdamMoments(w.size());
  state_.activation_scale = problem_.frozen_activation_scale(state_.a).value_or(1.0);
  initial_loss_ = problem_.hard_loss(quantize(layer.weight, {weight_bits, state_.a, Granularity::per_tensor()}));
}

double AdaRoundLayerOptimizer::lambda_at(long step) const {
  const auto& cfg = problem_.config();
  return static_cast<double>(step) < cfg.lambda_warmup * static_cast<double>(cfg.steps) ? 0.0 : cfg.lambda;
}

std::pair<double, double> AdaRoundLayerOptimizer::step(std::span<const std::size_t> rows) {
  const auto& cfg = problem_.config();
  const auto& layer = problem_.layer();
  const std::size_t in = layer.in_dim(), out = layer.out_dim(), bt = rows.size();
  const double limit = max_code(problem_.weight_bits());
  const double a = state_.a;
  const double s_w = state_.weight_scale;
  const double lambda = lambda_at(state_.step);
  const double beta = reg_beta_(std::min(state_.step, cfg.steps));

  std::vector<double> codes(state_.eps.size());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    codes[i] = std::clamp(state_.floored[i] + rectified_sigmoid(state_.eps[i]), -limit, limit);
  }
  const Forward f = forward_batch(problem_, rows, codes, s_w, a);
  const double reg = adaround_regularizer(state_.eps, lambda, beta);
  if (!std::isfinite(f.loss) || !std::isfinite(reg)) {
    throw NumericError("layer loss diverged at step " + std::to_string(state_.step));
  }
  const auto g_w = weight_gradient(f, bt, in, out);
  std::vector<double> g_eps(codes.size(), 0.0);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const double sigma = rectified_sigmoid(state_.eps[i]);
    const double raw = state_.floored[i] + sigma;
    double g_sigma = adaround_regularizer_grad_sigma(sigma, lambda, beta);
    if (raw >= -limit && raw <= limit) {
      g_sigma += g_w[i] * s_w * dequant_slope(std::abs(codes[i]) * s_w, a, cfg.clip_floor);
    }
    g_eps[i] = g_sigma * rectified_sigmoid_grad(state_.eps[i]);
  }
  adam_step({cfg.lr_eps, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon}, state_.eps, g_eps, state_.eps_moments);
  ++state_.step;
  if (problem_.activation_bits()) {
    state_.activation_scale = transformed_scale(f.input.raw, a, *problem_.activation_bits());
  }
  return {f.loss, reg};
}

QuantizedTensor AdaRoundLayerOptimizer::current_codes() const {
  const int bits = problem_.weight_bits();
  const double limit = max_code(bits);
  std::vector<std::int8_t> codes(state_.eps.size());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const double up = rectified_sigmoid(state_.eps[i]) >= 0.5 ? 1.0 : 0.0;
    codes[i] = static_cast<std::int8_t>(std::clamp(state_.floored[i] + up, -limit, limit));
  }
  return make_codes(problem_.layer().weight.shape(), std::move(codes), state_.weight_scale, state_.a, bits);
}

LayerOptResult AdaRoundLayerOptimizer::run() {
  const auto start = Clock::now();
  auto& problem = problem_;
  while (state_.step < problem.config().steps) step(problem.next_batch());

  LayerOptResult result;
  result.steps = state_.step;
  result.initial_loss = initial_loss_;
  result.codes = current_codes();
  result.final_loss = problem.hard_loss(result.codes);
  if (!(result.final_loss <= initial_loss_)) {
    result.kept_initial = true;
    result.codes = quantize(problem.layer().weight, {problem.weight_bits(), state_.a, Granularity::per_tensor()});
    result.final_loss = initial_loss_;
  }
  result.exponent = result.codes.exponent;
  result.activation_scale = problem.frozen_activation_scale(result.exponent);
  result.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return result;
}

LayerOptResult optimize_layer_nupes(const DenseLayer& layer, const Tensor& x_fp, const Tensor& x_q, int weight_bits,
                                    std::optional<int> activation_bits, const OptConfig& cfg) {
  DsqLayerOptimizer opt(layer, x_fp, x_q, weight_bits, activation_bits, cfg);
  return opt.run();
}

LayerOptResult optimize_layer_adaround(const DenseLayer& layer, const Tensor& x_fp, const Tensor& x_q,
                                       int weight_bits, std::optional<int> activation_bits, const OptConfig& cfg) {
  AdaRoundLayerOptimizer opt(layer, x_fp, x_q, weight_bits, activation_bits, cfg);
  return opt.run();
}

ModelOptResult optimize_model(const ModelSpec& model, const Tensor& calib, const PolicyOptions& bits,
                              const OptConfig& cfg) {
  model.validate();
  cfg.validate();
  if (calib.rank() != 2 || calib.cols() != model.input_dim()) {
    throw ShapeError("calibration set " + shape_to_string(calib.shape()) + " does not match model input");
  }
  if (bits.weight_granularity.kind != Granularity::Kind::per_tensor) {
    throw ConfigError("layer optimization supports per-tensor weight scales only");
  }
  const std::size_t rows = std::min(calib.rows(), cfg.calibration_samples);
  Tensor x_fp = calib.reshaped(calib.shape());
  if (rows < calib.rows()) {
    const auto d = calib.data();
    x_fp = Tensor({rows, calib.cols()}, std::vector<float>(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(rows * calib.cols())));
  }
  Tensor x_q = x_fp;

  PolicyOptions opts = bits;
  opts.exponent = cfg.init_a;
  ModelOptResult out;
  out.policy = make_policy(model, opts);

  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    auto& lq = out.policy.layers[l];
    OptConfig layer_cfg = cfg;
    layer_cfg.seed = cfg.seed + l;
    const std::optional<int> abits = lq.activation ? std::optional<int>(lq.activation->bits) : std::nullopt;

    const LayerOptResult r = cfg.method == RoundingMethod::dsq
                                 ? optimize_layer_nupes(layer, x_fp, x_q, lq.weight.bits, abits, layer_cfg)
                                 : optimize_layer_adaround(layer, x_fp, x_q, lq.weight.bits, abits, layer_cfg);
    lq.weight.exponent = r.exponent;
    lq.weight_codes = r.codes;
    if (lq.activation) {
      lq.activation->exponent = r.exponent;
      lq.activation_scale = r.activation_scale;
    }

    LayerReport rep;
    rep.layer = l;
    rep.mode = to_string(cfg.mode);
    rep.method = to_string(cfg.method);
    rep.steps = r.steps;
    rep.beta_scheduler = cfg.method == RoundingMethod::dsq ? cfg.dsq_beta.to_string() : "adaround";
    rep.initial_loss = r.initial_loss;
    rep.final_loss = r.final_loss;
    rep.learned_a = r.exponent;
    rep.seconds = r.seconds;
    rep.kept_initial = r.kept_initial;
    out.report.push_back(rep);

    if (l + 1 < model.layers.size()) {
      x_fp = dense_forward(x_fp, layer.weight, layer.bias, layer.activation);
      Tensor xin = x_q;
      if (lq.activation) {
        const double s = *lq.activation_scale;
        xin = fake_quantize_with_scales(x_q, *lq.activation, std::span<const double>(&s, 1));
      }
      x_q = dense_forward(xin, dequantize(r.codes), layer.bias, layer.activation);
    }
  }
  return out;
}

std::string report_to_json(const std::vector<LayerReport>& report) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : report) {
    arr.push_back({{"layer", r.layer},
                   {"mode", r.mode},
                   {"method", r.method},
                   {"steps", r.steps},
                   {"beta_scheduler", r.beta_scheduler},
                   {"initial_loss", r.initial_loss},
                   {"final_loss", r.final_loss},
                   {"learned_a", r.learned_a},
                   {"seconds", r.seconds},
                   {"kept_initial", r.kept_initial}});
  }
  return arr.dump(2);
}

}  // namespace powq
