// Copyright 2026 The hwq Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hwq/model.hpp"
#include "hwq/tensor.hpp"

namespace hwq {

struct LabeledSet {
  Tensor images;            // (N, C, H, W)
  std::vector<int> labels;  // N entries in [0, classes)
};

// Class prototypes are smooth random images (a coarse normal grid upsampled
// bilinearly); samples are a prototype plus white noise. Sample i belongs to
// class i % classes. The same prototype_seed always yields the same classes,
// so train and eval splits differ only in sample_seed.
struct DatasetSpec {
  FeatureShape shape{3, 12, 12};
  std::size_t classes = 10;
  std::size_t samples = 200;
  std::size_t coarse = 3;  // prototype grid side before upsampling
  double noise = 1.0;
  std::uint64_t prototype_seed = 7;
  std::uint64_t sample_seed = 1;
};

LabeledSet make_dataset(const DatasetSpec& spec);

std::vector<std::size_t> argmax_rows(const Tensor& logits);
// Fraction of rows whose argmax equals the label.
double top1_accuracy(const Tensor& logits, std::span<const int> labels);
// Number of rows whose argmax differs between the two logit tensors.
std::size_t disagreements(const Tensor& a, const Tensor& b);

// Stored with save_tensor_file; labels live in the manifest metadata.
void save_labeled_set(const std::filesystem::path& manifest, const LabeledSet& set);
LabeledSet load_labeled_set(const std::filesystem::path& manifest);

}  // namespace hwq
