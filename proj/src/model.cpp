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

#include "powq/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "powq/error.hpp"

namespace powq {

using json = nlohmann::json;

std::string to_string(Activation act) { return act == Activation::relu ? "relu" : "identity"; }

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "identity") return Activation::identity;
  throw ManifestError("unknown activation '" + name + "'");
}

std::size_t ModelSpec::input_dim() const {
  if (layers.empty()) throw ManifestError("model has no layers");
  return layers.front().in_dim();
}

std::size_t ModelSpec::output_dim() const {
  if (layers.empty()) throw ManifestError("model has no layers");
  return layers.back().out_dim();
}

void ModelSpec::validate() const {
  if (layers.empty()) throw ManifestError("model has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.weight.rank() != 2) throw ShapeError("layer " + std::to_string(l) + " weight must be 2-D");
    if (layer.bias.shape() != Shape{layer.out_dim()}) {
      throw ShapeError("layer " + std::to_string(l) + " bias shape " + shape_to_string(layer.bias.shape()) +
                       " does not match output dim " + std::to_string(layer.out_dim()));
    }
    if (l > 0 && layers[l - 1].out_dim() != layer.in_dim()) {
      throw DimensionChainError("layer " + std::to_string(l - 1) + " outputs " +
                                std::to_string(layers[l - 1].out_dim()) + " but layer " + std::to_string(l) +
                                " expects " + std::to_string(layer.in_dim()));
    }
  }
  if (layers.back().activation != Activation::identity) {
    throw ManifestError("last layer must have identity activation (logits)");
  }
}

QuantPolicy make_policy(const ModelSpec& model, const PolicyOptions& options) {
  QuantPolicy policy;
  const std::size_t n = model.layers.size();
  for (std::size_t l = 0; l < n; ++l) {
    const bool edge = options.first_last_8bit && (l == 0 || l + 1 == n);
    LayerQuant lq;
    lq.weight = {edge ? 8 : options.weight_bits, options.exponent, options.weight_granularity};
    lq.weight.validate();
    if (options.activation_bits > 0) {
      lq.activation = QuantConfig{edge ? 8 : options.activation_bits, options.exponent, Granularity::per_tensor()};
      lq.activation->validate();
    }
    policy.layers.push_back(std::move(lq));
  }
  return policy;
}

QuantPolicy passthrough_policy() {
  QuantPolicy p;
  p.enabled = false;
  return p;
}

Tensor quantized_weight(const DenseLayer& layer, const LayerQuant& lq) {
  if (lq.weight_codes) {
    if (lq.weight_codes->shape != layer.weight.shape()) {
      throw PolicyError("learned codes shape " + shape_to_string(lq.weight_codes->shape) + " does not match weight " +
                        shape_to_string(layer.weight.shape()));
    }
    return dequantize(*lq.weight_codes);
  }
  return fake_quantize(layer.weight, lq.weight);
}

Tensor dense_linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const Tensor y = matmul(x, weight);
  const std::size_t rows = y.rows(), cols = y.cols();
  std::vector<float> out(y.data().begin(), y.data().end());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bias[c];
  }
  return Tensor(y.shape(), std::move(out));
}

Tensor apply_activation(const Tensor& x, Activation act) { return act == Activation::relu ? relu(x) : x; }

Tensor dense_forward(const Tensor& x, const Tensor& weight, const Tensor& bias, Activation act) {
  return apply_activation(dense_linear(x, weight, bias), act);
}

namespace {

void check_input(const ModelSpec& model, const Tensor& x) {
  if (x.rank() != 2 || x.cols() != model.input_dim()) {
    throw ShapeError("input " + shape_to_string(x.shape()) + " does not match model input dim " +
                     std::to_string(model.input_dim()));
  }
}

void check_policy(const ModelSpec& model, const QuantPolicy& policy) {
  if (policy.layers.size() != model.layers.size()) {
    throw PolicyError("policy covers " + std::to_string(policy.layers.size()) + " layers, model has " +
                      std::to_string(model.layers.size()));
  }
}

Tensor quantize_input(const Tensor& x, const LayerQuant& lq, std::size_t layer) {
  if (!lq.activation) return x;
  if (!lq.activation_scale) {
    throw PolicyError("layer " + std::to_string(layer) +
                      " has activation quantization but no frozen scale; run calibration first");
  }
  const double scale = *lq.activation_scale;
  return fake_quantize_with_scales(x, *lq.activation, std::span<const double>(&scale, 1));
}

}  // namespace

void calibrate_activations(const ModelSpec& model, QuantPolicy& policy, const Tensor& calib) {
  check_input(model, calib);
  check_policy(model, policy);
  Tensor x = calib;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto& lq = policy.layers[l];
    if (lq.activation) {
      std::vector<double> t(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) t[i] = power_transform(static_cast<double>(x[i]), lq.activation->exponent);
      lq.activation_scale = compute_scale(t, GroupLayout(x.shape(), Granularity::per_tensor()), lq.activation->bits)[0];
    }
    const auto& layer = model.layers[l];
    x = dense_forward(quantize_input(x, lq, l), quantized_weight(layer, lq), layer.bias, layer.activation);
  }
}

Tensor forward_fp(const ModelSpec& model, const Tensor& x) {
  check_input(model, x);
  Tensor h = x;
  for (const auto& layer : model.layers) h = dense_forward(h, layer.weight, layer.bias, layer.activation);
  return h;
}

std::vector<Tensor> layer_inputs_fp(const ModelSpec& model, const Tensor& x) {
  check_input(model, x);
  std::vector<Tensor> inputs{x};
  for (std::size_t l = 0; l + 1 < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    inputs.push_back(dense_forward(inputs.back(), layer.weight, layer.bias, layer.activation));
  }
  return inputs;
}

Tensor forward_quant(const ModelSpec& model, const QuantPolicy& policy, const Tensor& x) {
  if (!policy.enabled) return forward_fp(model, x);
  check_input(model, x);
  check_policy(model, policy);
  Tensor h = x;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    const auto& lq = policy.layers[l];
    h = dense_forward(quantize_input(h, lq, l), quantized_weight(layer, lq), layer.bias, layer.activation);
  }
  return h;
}

std::vector<int> predict_classes(const Tensor& logits) {
  const std::size_t rows = logits.rows(), cols = logits.cols();
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c) {
      if (logits.at(r, c) > logits.at(r, best)) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

double accuracy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rows() != labels.size()) throw ShapeError("label count does not match logits rows");
  const auto pred = predict_classes(logits);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

// ---------------------------------------------------------------------------
// Model files

namespace {

constexpr int kFormatVersion = 1;

std::filesystem::path blob_path_for(const std::filesystem::path& manifest_path) {
  auto p = manifest_path;
  p.replace_extension(".bin");
  return p;
}

void append_f32(std::string& blob, const Tensor& t) {
  for (float f : t.data()) {
    const auto v = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) blob.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
}

std::vector<float> read_f32(const std::string& blob, std::size_t offset, std::size_t length) {
  std::vector<float> out(length / 4);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(blob[offset + 4 * k + i])) << (8 * i);
    }
    out[k] = std::bit_cast<float>(v);
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!os) throw IoError("failed writing '" + path.string() + "'");
}

json parse_json(const std::string& text, const std::filesystem::path& path) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ManifestError("malformed manifest '" + path.string() + "': " + e.what());
  }
}

}  // namespace

void save_model(const ModelSpec& model, const std::filesystem::path& manifest_path) {
  model.validate();
  std::string blob;
  json layers = json::array();
  for (const auto& layer : model.layers) {
    const std::size_t w_off = blob.size();
    append_f32(blob, layer.weight);
    const std::size_t b_off = blob.size();
    append_f32(blob, layer.bias);
    layers.push_back({
        {"in", layer.in_dim()},
        {"out", layer.out_dim()},
        {"activation", to_string(layer.activation)},
        {"weight", {{"offset", w_off}, {"length", b_off - w_off}}},
        {"bias", {{"offset", b_off}, {"length", blob.size() - b_off}}},
    });
  }
  const auto blob_path = blob_path_for(manifest_path);
  json manifest = {
      {"format_version", kFormatVersion},
      {"name", model.name},
      {"input_dim", model.input_dim()},
      {"output_dim", model.output_dim()},
      {"dtype", "float32-le"},
      {"blob", blob_path.filename().string()},
      {"blob_bytes", blob.size()},
      {"layers", layers},
  };
  write_file(blob_path, blob);
  write_file(manifest_path, manifest.dump(2) + "\n");
}

ModelSpec load_model(const std::filesystem::path& manifest_path) {
  const json manifest = parse_json(read_file(manifest_path), manifest_path);
  ModelSpec model;
  std::string blob;
  struct Entry {
    std::size_t in, out, w_off, w_len, b_off, b_len;
    Activation act;
  };
  std::vector<Entry> entries;
  try {
    if (manifest.at("format_version").get<int>() != kFormatVersion) {
      throw ManifestError("unsupported model format_version " + manifest.at("format_version").dump());
    }
    model.name = manifest.value("name", std::string("model"));
    const auto blob_name = manifest.at("blob").get<std::string>();
    blob = read_file(manifest_path.parent_path() / blob_name);
    for (const auto& l : manifest.at("layers")) {
      entries.push_back({l.at("in").get<std::size_t>(), l.at("out").get<std::size_t>(),
                         l.at("weight").at("offset").get<std::size_t>(), l.at("weight").at("length").get<std::size_t>(),
                         l.at("bias").at("offset").get<std::size_t>(), l.at("bias").at("length").get<std::size_t>(),
                         activation_from_string(l.at("activation").get<std::string>())});
    }
  } catch (const json::exception& e) {
    throw ManifestError("malformed manifest '" + manifest_path.string() + "': " + e.what());
  }
  if (entries.empty()) throw ManifestError("manifest lists no layers");

  for (std::size_t l = 0; l < entries.size(); ++l) {
    const auto& e = entries[l];
    if (e.in == 0 || e.out == 0) throw ManifestError("layer " + std::to_string(l) + " has a zero dimension");
    if (l > 0 && entries[l - 1].out != e.in) {
      throw DimensionChainError("layer " + std::to_string(l - 1) + " outputs " + std::to_string(entries[l - 1].out) +
                                " but layer " + std::to_string(l) + " expects " + std::to_string(e.in));
    }
    if (e.w_len != e.in * e.out * 4 || e.b_len != e.out * 4) {
      throw TruncatedBlobError("layer " + std::to_string(l) + " blob lengths do not match its dimensions");
    }
    if (e.w_off + e.w_len > blob.size() || e.b_off + e.b_len > blob.size()) {
      throw TruncatedBlobError("blob ends before layer " + std::to_string(l) + " payload (" +
                               std::to_string(blob.size()) + " bytes)");
    }
    model.layers.push_back({Tensor({e.in, e.out}, read_f32(blob, e.w_off, e.w_len)),
                            Tensor({e.out}, read_f32(blob, e.b_off, e.b_len)), e.act});
  }
  if (manifest.contains("input_dim") && manifest["input_dim"].get<std::size_t>() != model.input_dim()) {
    throw DimensionChainError("manifest input_dim disagrees with first layer");
  }
  if (manifest.contains("output_dim") && manifest["output_dim"].get<std::size_t>() != model.output_dim()) {
    throw DimensionChainError("manifest output_dim disagrees with last layer");
  }
  model.validate();
  return model;
}

// ---------------------------------------------------------------------------
// Bundles

namespace {

json config_to_json(const QuantConfig& c) {
  return {{"bits", c.bits},
          {"exponent", c.exponent},
          {"granularity", to_string(c.granularity.kind)},
          {"group_size", c.granularity.group_size}};
}

QuantConfig config_from_json(const json& j) {
  QuantConfig c;
  c.bits = j.at("bits").get<int>();
  c.exponent = j.at("exponent").get<double>();
  c.granularity.kind = granularity_kind_from_string(j.value("granularity", std::string("per_tensor")));
  c.granularity.group_size = j.value("group_size", std::size_t{0});
  c.validate();
  return c;
}

}  // namespace

void save_bundle(const QuantPolicy& policy, const std::filesystem::path& bundle_path) {
  json layers = json::array();
  for (std::size_t l = 0; l < policy.layers.size(); ++l) {
    const auto& lq = policy.layers[l];
    json entry = {{"weight", config_to_json(lq.weight)}};
    entry["activation"] = lq.activation ? config_to_json(*lq.activation) : json(nullptr);
    entry["activation_scale"] = lq.activation_scale ? json(*lq.activation_scale) : json(nullptr);
    if (lq.weight_codes) {
      auto qt_path = bundle_path;
      qt_path.replace_extension(".layer" + std::to_string(l) + ".qt");
      save_quantized(*lq.weight_codes, qt_path);
      entry["codes"] = qt_path.filename().string();
    } else {
      entry["codes"] = nullptr;
    }
    layers.push_back(std::move(entry));
  }
  json manifest = {{"format", "powq.bundle"},
                   {"format_version", kFormatVersion},
                   {"enabled", policy.enabled},
                   {"layers", layers}};
  write_file(bundle_path, manifest.dump(2) + "\n");
}

QuantPolicy load_bundle(const std::filesystem::path& bundle_path) {
  const json manifest = parse_json(read_file(bundle_path), bundle_path);
  QuantPolicy policy;
  try {
    if (manifest.at("format").get<std::string>() != "powq.bundle") throw ManifestError("not a quantized bundle");
    if (manifest.at("format_version").get<int>() != kFormatVersion) throw ManifestError("unsupported bundle version");
    policy.enabled = manifest.value("enabled", true);
    for (const auto& entry : manifest.at("layers")) {
      LayerQuant lq;
      lq.weight = config_from_json(entry.at("weight"));
      if (!entry.at("activation").is_null()) lq.activation = config_from_json(entry.at("activation"));
      if (!entry.at("activation_scale").is_null()) lq.activation_scale = entry.at("activation_scale").get<double>();
      if (!entry.at("codes").is_null()) {
        lq.weight_codes = load_quantized(bundle_path.parent_path() / entry.at("codes").get<std::string>());
      }
      policy.layers.push_back(std::move(lq));
    }
  } catch (const json::exception& e) {
    throw ManifestError("malformed bundle '" + bundle_path.string() + "': " + e.what());
  }
  return policy;
}

}  // namespace powq
