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

#include "powq/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "powq/error.hpp"

namespace powq {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty()) throw ShapeError("tensor shape must have at least one dimension");
  for (std::size_t d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_to_string(shape_));
  }
  if (shape_numel(shape_) != data_.size()) {
    throw ShapeError("shape " + shape_to_string(shape_) + " does not match " + std::to_string(data_.size()) +
                     " values");
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw ValueError("non-finite value at flat index " + std::to_string(i));
    }
  }
}

Tensor Tensor::zeros(Shape shape) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<float>(n, 0.0f));
}

Tensor Tensor::from_doubles(Shape shape, std::span<const double> values) {
  std::vector<float> data(values.size());
  std::transform(values.begin(), values.end(), data.begin(), [](double v) { return static_cast<float>(v); });
  return Tensor(std::move(shape), std::move(data));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("expected a 2-D tensor, got " + shape_to_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("expected a 2-D tensor, got " + shape_to_string(shape_));
  return shape_[1];
}

std::vector<double> Tensor::to_doubles() const { return {data_.begin(), data_.end()}; }

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

std::string to_string(Granularity::Kind kind) {
  switch (kind) {
    case Granularity::Kind::per_tensor: return "per_tensor";
    case Granularity::Kind::per_channel: return "per_channel";
    case Granularity::Kind::per_group: return "per_group";
  }
  return "unknown";
}

Granularity::Kind granularity_kind_from_string(const std::string& name) {
  if (name == "per_tensor") return Granularity::Kind::per_tensor;
  if (name == "per_channel") return Granularity::Kind::per_channel;
  if (name == "per_group") return Granularity::Kind::per_group;
  throw ConfigError("unknown granularity '" + name + "'");
}

GroupLayout::GroupLayout(const Shape& shape, Granularity granularity) {
  const std::size_t numel = shape_numel(shape);
  switch (granularity.kind) {
    case Granularity::Kind::per_tensor:
      group_len_ = numel;
      break;
    case Granularity::Kind::per_channel:
      if (shape.size() < 2) {
        throw ConfigError("per-channel granularity needs at least 2 dimensions, got " + shape_to_string(shape));
      }
      channels_ = shape.back();
      group_len_ = numel / channels_;
      num_groups_ = channels_;
      break;
    case Granularity::Kind::per_group: {
      if (granularity.group_size < 2) throw ConfigError("group size must be at least 2");
      channels_ = shape.size() >= 2 ? shape.back() : 1;
      const std::size_t channel_len = numel / channels_;
      if (channel_len % granularity.group_size != 0) {
        throw ConfigError("group size " + std::to_string(granularity.group_size) +
                          " does not divide channel length " + std::to_string(channel_len));
      }
      group_len_ = granularity.group_size;
      groups_per_channel_ = channel_len / group_len_;
      num_groups_ = channels_ * groups_per_channel_;
      break;
    }
  }
}

Tensor matmul(const Tensor& x, const Tensor& w) {
  if (x.rank() != 2 || w.rank() != 2 || x.cols() != w.rows()) {
    throw ShapeError("matmul shape mismatch: " + shape_to_string(x.shape()) + " . " + shape_to_string(w.shape()));
  }
  const std::size_t rows = x.rows(), inner = x.cols(), cols = w.cols();
  const auto xd = x.data();
  const auto wd = w.data();
  std::vector<double> acc(cols);
  std::vector<float> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t k = 0; k < inner; ++k) {
      const double xv = xd[r * inner + k];
      const float* wrow = wd.data() + k * cols;
      for (std::size_t c = 0; c < cols; ++c) acc[c] += xv * static_cast<double>(wrow[c]);
    }
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = static_cast<float>(acc[c]);
  }
  return Tensor({rows, cols}, std::move(out));
}

Tensor relu(const Tensor& x) {
  std::vector<float> out(x.data().begin(), x.data().end());
  for (float& v : out) v = std::max(v, 0.0f);
  return Tensor(x.shape(), std::move(out));
}

std::vector<double> reduce_max_abs(std::span<const double> values, const GroupLayout& layout) {
  std::vector<double> maxima(layout.num_groups(), 0.0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    double& m = maxima[layout.group_of(i)];
    m = std::max(m, std::abs(values[i]));
  }
  return maxima;
}

std::vector<double> reduce_max_abs(const Tensor& x, Granularity granularity) {
  const GroupLayout layout(x.shape(), granularity);
  const auto values = x.to_doubles();
  return reduce_max_abs(values, layout);
}

double exact_sum(std::span<const double> values) {
  std::vector<double> partials;
  for (double x : values) {
    std::size_t kept = 0;
    for (std::size_t j = 0; j < partials.size(); ++j) {
      double y = partials[j];
      if (std::abs(x) < std::abs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials[kept++] = lo;
      x = hi;
    }
    partials.resize(kept);
    partials.push_back(x);
  }
  if (partials.empty()) return 0.0;

  std::size_t n = partials.size();
  double hi = partials[--n];
  double lo = 0.0;
  while (n > 0) {
    const double x = hi;
    const double y = partials[--n];
    hi = x + y;
    lo = y - (hi - x);
    if (lo != 0.0) break;
  }
  // Round-half-even correction when the remaining partials push past a tie.
  if (n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0))) {
    const double y = lo * 2.0;
    const double x = hi + y;
    if (y == x - hi) hi = x;
  }
  return hi;
}

}  // namespace powq
