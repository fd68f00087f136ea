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

#include "powq/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "powq/error.hpp"

namespace powq {

void Dataset::validate() const {
  if (labels.empty()) throw ValueError("dataset is empty");
  if (features.rank() != 2 || features.rows() != labels.size()) {
    throw ShapeError("features " + shape_to_string(features.shape()) + " do not match " +
                     std::to_string(labels.size()) + " labels");
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw ValueError("label " + std::to_string(y) + " outside [0, num_classes)");
  }
}

Dataset Dataset::slice(std::size_t begin, std::size_t count) const {
  if (begin + count > size() || count == 0) throw ShapeError("dataset slice out of range");
  const std::size_t dim = input_dim();
  const auto data = features.data();
  std::vector<float> f(data.begin() + static_cast<std::ptrdiff_t>(begin * dim),
                       data.begin() + static_cast<std::ptrdiff_t>((begin + count) * dim));
  std::vector<int> y(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                     labels.begin() + static_cast<std::ptrdiff_t>(begin + count));
  return {Tensor({count, dim}, std::move(f)), std::move(y), num_classes};
}

Dataset make_blobs(const BlobsOptions& o) {
  if (o.num_classes < 2 || o.num_samples == 0 || o.input_dim == 0 || !(o.separation > 0.0)) {
    throw ConfigError("blobs parameters must be positive (and at least 2 classes)");
  }
  if (static_cast<std::size_t>(o.num_classes) > 2 * o.input_dim) {
    throw ConfigError("blobs supports at most 2 * input_dim classes");
  }
  const double offset = o.separation / std::sqrt(2.0);
  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, o.num_classes - 1);

  std::vector<float> f(o.num_samples * o.input_dim);
  std::vector<int> y(o.num_samples);
  for (std::size_t i = 0; i < o.num_samples; ++i) {
    const int c = pick(rng);
    y[i] = c;
    const std::size_t axis = static_cast<std::size_t>(c) % o.input_dim;
    const double sign = static_cast<std::size_t>(c) < o.input_dim ? 1.0 : -1.0;
    for (std::size_t d = 0; d < o.input_dim; ++d) {
      const double mean = d == axis ? sign * offset : 0.0;
      f[i * o.input_dim + d] = static_cast<float>(mean + noise(rng));
    }
  }
  return {Tensor({o.num_samples, o.input_dim}, std::move(f)), std::move(y), o.num_classes};
}

DatasetSplits split_dataset(const Dataset& data, std::size_t calib_size, std::size_t test_size) {
  if (test_size == 0 || test_size >= data.size()) throw ConfigError("test split must leave training rows");
  const std::size_t train_size = data.size() - test_size;
  if (calib_size == 0 || calib_size > train_size) {
    throw ConfigError("calibration split of " + std::to_string(calib_size) + " does not fit in " +
                      std::to_string(train_size) + " training rows");
  }
  Dataset train = data.slice(0, train_size);
  Dataset calib = train.slice(0, calib_size);
  return {std::move(train), std::move(calib), data.slice(train_size, test_size)};
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
  data.validate();
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  const std::size_t dim = data.input_dim();
  char buf[32];
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (std::size_t d = 0; d < dim; ++d) {
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(data.features.at(r, d)));
      os << buf << ',';
    }
    os << data.labels[r] << '\n';
  }
  if (!os) throw IoError("failed writing '" + path.string() + "'");
}

Dataset load_csv(const std::filesystem::path& path, int num_classes) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  std::vector<float> f;
  std::vector<int> y;
  std::size_t dim = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 2) throw ValueError(path.string() + ":" + std::to_string(line_no) + ": too few columns");
    if (dim == 0) dim = cells.size() - 1;
    if (cells.size() - 1 != dim) throw ValueError(path.string() + ":" + std::to_string(line_no) + ": ragged row");
    try {
      for (std::size_t d = 0; d < dim; ++d) f.push_back(std::stof(cells[d]));
      y.push_back(std::stoi(cells.back()));
    } catch (const std::exception&) {
      throw ValueError(path.string() + ":" + std::to_string(line_no) + ": unparseable value");
    }
  }
  if (y.empty()) throw ValueError("dataset '" + path.string() + "' is empty");
  if (num_classes == 0) num_classes = *std::max_element(y.begin(), y.end()) + 1;
  Dataset data{Tensor({y.size(), dim}, std::move(f)), std::move(y), num_classes};
  data.validate();
  return data;
}

namespace {

struct DenseParams {
  std::size_t in = 0, out = 0;
  std::vector<double> w, b;
};

}  // namespace

ModelSpec train_fixture(const Dataset& train, const TrainOptions& options) {
  train.validate();
  if (options.batch_size == 0 || options.epochs == 0) throw ConfigError("epochs and batch size must be positive");
  std::mt19937_64 rng(options.seed);

  std::vector<std::size_t> dims{train.input_dim()};
  dims.insert(dims.end(), options.hidden.begin(), options.hidden.end());
  dims.push_back(static_cast<std::size_t>(train.num_classes));
  const std::size_t depth = dims.size() - 1;

  std::vector<DenseParams> net(depth);
  for (std::size_t l = 0; l < depth; ++l) {
    auto& p = net[l];
    p.in = dims[l];
    p.out = dims[l + 1];
    std::normal_distribution<double> init(0.0, std::sqrt(2.0 / static_cast<double>(p.in)));
    p.w.resize(p.in * p.out);
    for (double& v : p.w) v = init(rng);
    p.b.assign(p.out, 0.0);
  }

  const std::size_t n = train.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::vector<double>> act(depth + 1), grad(depth + 1);

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += options.batch_size) {
      const std::size_t bs = std::min(options.batch_size, n - start);
      act[0].assign(bs * dims[0], 0.0);
      for (std::size_t r = 0; r < bs; ++r) {
        for (std::size_t d = 0; d < dims[0]; ++d) act[0][r * dims[0] + d] = train.features.at(order[start + r], d);
      }
      for (std::size_t l = 0; l < depth; ++l) {
        const auto& p = net[l];
        auto& z = act[l + 1];
        z.assign(bs * p.out, 0.0);
        for (std::size_t r = 0; r < bs; ++r) {
          for (std::size_t k = 0; k < p.in; ++k) {
            const double xv = act[l][r * p.in + k];
            for (std::size_t c = 0; c < p.out; ++c) z[r * p.out + c] += xv * p.w[k * p.out + c];
          }
          for (std::size_t c = 0; c < p.out; ++c) {
            z[r * p.out + c] += p.b[c];
            if (l + 1 < depth) z[r * p.out + c] = std::max(z[r * p.out + c], 0.0);
          }
        }
      }
      // softmax cross-entropy gradient
      const std::size_t k = dims[depth];
      auto& g = grad[depth];
      g.assign(bs * k, 0.0);
      for (std::size_t r = 0; r < bs; ++r) {
        const double* z = act[depth].data() + r * k;
        const double zmax = *std::max_element(z, z + k);
        double denom = 0.0;
        for (std::size_t c = 0; c < k; ++c) denom += std::exp(z[c] - zmax);
        for (std::size_t c = 0; c < k; ++c) {
          const double prob = std::exp(z[c] - zmax) / denom;
          const double target = static_cast<int>(c) == train.labels[order[start + r]] ? 1.0 : 0.0;
          g[r * k + c] = (prob - target) / static_cast<double>(bs);
        }
      }
      for (std::size_t l = depth; l-- > 0;) {
        auto& p = net[l];
        const auto& gz = grad[l + 1];
        auto& gx = grad[l];
        gx.assign(bs * p.in, 0.0);
        for (std::size_t r = 0; r < bs; ++r) {
          for (std::size_t i = 0; i < p.in; ++i) {
            double acc = 0.0;
            for (std::size_t c = 0; c < p.out; ++c) acc += gz[r * p.out + c] * p.w[i * p.out + c];
            // relu mask of the previous layer output
            gx[r * p.in + i] = (l > 0 && act[l][r * p.in + i] <= 0.0) ? 0.0 : acc;
          }
        }
        for (std::size_t i = 0; i < p.in; ++i) {
          for (std::size_t c = 0; c < p.out; ++c) {
            double acc = 0.0;
            for (std::size_t r = 0; r < bs; ++r) acc += act[l][r * p.in + i] * gz[r * p.out + c];
            p.w[i * p.out + c] -= options.learning_rate * acc;
          }
        }
        for (std::size_t c = 0; c < p.out; ++c) {
          double acc = 0.0;
          for (std::size_t r = 0; r < bs; ++r) acc += gz[r * p.out + c];
          p.b[c] -= options.learning_rate * acc;
        }
      }
    }
  }

  ModelSpec model;
  model.name = "fixture";
  for (std::size_t l = 0; l < depth; ++l) {
    const auto& p = net[l];
    model.layers.push_back({Tensor::from_doubles({p.in, p.out}, p.w), Tensor::from_doubles({p.out}, p.b),
                            l + 1 < depth ? Activation::relu : Activation::identity});
  }
  model.validate();

  const double acc = evaluate(model, train);
  if (acc < options.min_train_accuracy) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "fixture reached %.4f train accuracy (< %.2f); try more epochs", acc,
                  options.min_train_accuracy);
    throw FixtureError(buf);
  }
  return model;
}

double evaluate(const ModelSpec& model, const Dataset& data, const QuantPolicy* policy) {
  data.validate();
  const Tensor logits = policy ? forward_quant(model, *policy, data.features) : forward_fp(model, data.features);
  return accuracy(logits, data.labels);
}

}  // namespace powq
