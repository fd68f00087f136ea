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
#include <vector>

#include "powq/model.hpp"
#include "powq/tensor.hpp"

namespace powq {

struct Dataset {
  Tensor features;  // [num_samples x input_dim]
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t input_dim() const { return features.cols(); }
  void validate() const;
  /// Rows [begin, begin + count).
  Dataset slice(std::size_t begin, std::size_t count) const;
};

struct BlobsOptions {
  int num_classes = 4;
  std::size_t num_samples = 4096;
  std::size_t input_dim = 8;
  /// Pairwise distance between class means, in units of the cluster sigma.
  double separation = 4.0;
  std::uint64_t seed = 0;
};

/// Isotropic unit-variance Gaussian clusters. Class c is centred on
/// +-(separation / sqrt 2) e_(c mod dim), so every pair of means is at
/// least `separation` apart. Needs num_classes <= 2 * input_dim.
Dataset make_blobs(const BlobsOptions& options);

struct DatasetSplits {
  Dataset train;
  Dataset calib;  // leading rows of train
  Dataset test;   // disjoint from train
};

DatasetSplits split_dataset(const Dataset& data, std::size_t calib_size, std::size_t test_size);

/// CSV: feature columns, then the integer label. No header.
void save_csv(const Dataset& data, const std::filesystem::path& path);
Dataset load_csv(const std::filesystem::path& path, int num_classes = 0);

struct TrainOptions {
  std::vector<std::size_t> hidden{64, 32};
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;
  double min_train_accuracy = 0.9;
};

/// Mini-batch SGD on softmax cross-entropy. Deterministic for a given seed.
/// Throws FixtureError when the train accuracy stays below the threshold.
ModelSpec train_fixture(const Dataset& train, const TrainOptions& options);

/// Top-1 accuracy, full precision when policy is null.
double evaluate(const ModelSpec& model, const Dataset& data, const QuantPolicy* policy = nullptr);

}  // namespace powq
