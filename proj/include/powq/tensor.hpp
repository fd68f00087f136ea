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

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace powq {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major tensor of 32-bit floats.
///
/// Immutable after construction: every scalar is checked to be finite and the
/// shape must match the payload length. Derived tensors are built as new
/// values, so a Tensor can be shared freely between readers.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<float> data);

  static Tensor zeros(Shape shape);
  /// Narrows 64-bit values to 32-bit storage (round to nearest).
  static Tensor from_doubles(Shape shape, std::span<const double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  std::span<const float> data() const noexcept { return data_; }

  float operator[](std::size_t i) const { return data_[i]; }
  // 2-D accessors
  std::size_t rows() const;
  std::size_t cols() const;
  float at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::vector<double> to_doubles() const;
  Tensor reshaped(Shape shape) const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

/// How scales are shared across a tensor.
///
/// The channel axis is the last axis (output channel of an N x M weight).
/// Per-group splits each channel, flattened over the remaining axes, into
/// contiguous groups; a 1-D tensor is a single channel.
struct Granularity {
  enum class Kind { per_tensor, per_channel, per_group };

  Kind kind = Kind::per_tensor;
  std::size_t group_size = 0;

  static Granularity per_tensor() { return {Kind::per_tensor, 0}; }
  static Granularity per_channel() { return {Kind::per_channel, 0}; }
  static Granularity per_group(std::size_t size) { return {Kind::per_group, size}; }

  friend bool operator==(const Granularity&, const Granularity&) = default;
};

std::string to_string(Granularity::Kind kind);
Granularity::Kind granularity_kind_from_string(const std::string& name);

/// Maps flat element indices to scale-group indices for a given shape.
class GroupLayout {
 public:
  GroupLayout(const Shape& shape, Granularity granularity);

  std::size_t num_groups() const noexcept { return num_groups_; }
  std::size_t group_of(std::size_t flat_index) const noexcept {
    const std::size_t channel = flat_index % channels_;
    const std::size_t position = flat_index / channels_;
    return channel * groups_per_channel_ + position / group_len_;
  }

 private:
  std::size_t channels_ = 1;
  std::size_t group_len_ = 1;
  std::size_t groups_per_channel_ = 1;
  std::size_t num_groups_ = 1;
};

/// x[B x N] . w[N x M] with 64-bit accumulation.
Tensor matmul(const Tensor& x, const Tensor& w);

Tensor relu(const Tensor& x);

/// Maximum absolute value per scale group.
std::vector<double> reduce_max_abs(const Tensor& x, Granularity granularity);
std::vector<double> reduce_max_abs(std::span<const double> values, const GroupLayout& layout);

/// Correctly rounded sum of doubles (Shewchuk partials), independent of the
/// order of the inputs.
double exact_sum(std::span<const double> values);

}  // namespace powq
