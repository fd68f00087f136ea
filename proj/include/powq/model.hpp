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
#include <optional>
#include <string>
#include <vector>

#include "powq/quant.hpp"
#include "powq/tensor.hpp"

namespace powq {

enum class Activation { identity, relu };

std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

/// y = act(x . weight + bias), weight is [in x out].
struct DenseLayer {
  Tensor weight;
  Tensor bias;
  Activation activation = Activation::identity;

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }
};

struct ModelSpec {
  std::string name = "model";
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  /// Dimension chain, bias shapes, identity logits on the last layer.
  void validate() const;
};

/// Quantization settings of one layer. The activation config applies to the
/// layer input and is always per-tensor.
struct LayerQuant {
  QuantConfig weight;
  std::optional<QuantConfig> activation;
  /// Transformed-domain scale of the input, frozen by calibration.
  std::optional<double> activation_scale;
  /// Learned codes; when absent the weight is fake-quantized on the fly.
  std::optional<QuantizedTensor> weight_codes;
};

struct QuantPolicy {
  /// Disabled means pass-through: forward_quant == forward_fp.
  bool enabled = true;
  std::vector<LayerQuant> layers;
};

struct PolicyOptions {
  int weight_bits = 4;
  /// 0 leaves activations in floating point.
  int activation_bits = 4;
  double exponent = 1.0;
  Granularity weight_granularity = Granularity::per_tensor();
  /// Keep the first and last layer at W8/A8.
  bool first_last_8bit = true;
};

QuantPolicy make_policy(const ModelSpec& model, const PolicyOptions& options);
QuantPolicy passthrough_policy();

/// Fake-quantizes (or dequantizes learned codes for) the weight of one layer.
Tensor quantized_weight(const DenseLayer& layer, const LayerQuant& lq);

/// Freezes activation scales to the running max over `calib`, propagating
/// through the quantized prefix.
void calibrate_activations(const ModelSpec& model, QuantPolicy& policy, const Tensor& calib);

Tensor dense_forward(const Tensor& x, const Tensor& weight, const Tensor& bias, Activation act);
/// Pre-activation output x . weight + bias.
Tensor dense_linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor apply_activation(const Tensor& x, Activation act);

Tensor forward_fp(const ModelSpec& model, const Tensor& x);
Tensor forward_quant(const ModelSpec& model, const QuantPolicy& policy, const Tensor& x);
/// Inputs of every layer (index l = input of layer l) under the fp model.
std::vector<Tensor> layer_inputs_fp(const ModelSpec& model, const Tensor& x);

/// Argmax per row; ties go to the lowest index.
std::vector<int> predict_classes(const Tensor& logits);
double accuracy(const Tensor& logits, std::span<const int> labels);

// Model file: JSON manifest + little-endian f32 blob next to it.
void save_model(const ModelSpec& model, const std::filesystem::path& manifest_path);
ModelSpec load_model(const std::filesystem::path& manifest_path);

/// Quantized bundle: manifest with policy + frozen scales, one .qt per layer.
void save_bundle(const QuantPolicy& policy, const std::filesystem::path& bundle_path);
QuantPolicy load_bundle(const std::filesystem::path& bundle_path);

}  // namespace powq
