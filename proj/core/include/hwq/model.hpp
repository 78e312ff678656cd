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
#include <string_view>
#include <variant>
#include <vector>

#include "hwq/tensor.hpp"

namespace hwq {

// Per-sample feature map extents.
struct FeatureShape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t elements() const { return channels * height * width; }
  friend bool operator==(const FeatureShape&, const FeatureShape&) = default;
};

struct Conv2d {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  Tensor weight;            // (out_c, in_c, k_h, k_w)
  std::vector<float> bias;  // empty or out_c entries

  FeatureShape output_shape(const FeatureShape& in) const;
};

struct BatchNorm {
  std::size_t channels = 0;
  std::vector<float> running_mean;
  std::vector<float> running_var;
  std::vector<float> gamma;
  std::vector<float> beta;
  float eps = 1e-5F;
};

struct ReLU {};

struct AvgPool {
  std::size_t window = 2;
  std::size_t stride = 2;

  FeatureShape output_shape(const FeatureShape& in) const;
};

// Flattens its (C, H, W) input; output is (out_features, 1, 1).
struct Linear {
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  Tensor weight;            // (out_features, in_features)
  std::vector<float> bias;  // empty or out_features entries
};

// out = previous layer output + output of layer `source`.
struct ResidualAdd {
  std::size_t source = 0;
};

using Layer = std::variant<Conv2d, BatchNorm, ReLU, AvgPool, Linear, ResidualAdd>;

std::string_view layer_kind_name(const Layer& layer);
bool has_weights(const Layer& layer);
const Tensor* layer_weights(const Layer& layer);
std::size_t weight_count(const Layer& layer);
// BN vectors and biases, which are kept at 32 bits.
std::size_t fp32_param_count(const Layer& layer);

struct ModelGraph {
  std::vector<Layer> layers;
  FeatureShape input_shape;
  std::size_t class_count = 0;
};

// Checks shape composition, parameter extents, residual references and
// finiteness of every stored value. Throws Error on the first violation.
void validate(const ModelGraph& model);

// Output shape of every layer for one sample (index i = output of layer i).
std::vector<FeatureShape> infer_shapes(const ModelGraph& model);
FeatureShape layer_input_shape(const ModelGraph& model, std::size_t layer);

// Indices of the layers that carry quantizable weights (Conv2d, Linear), in
// order. Everything keyed "per layer" downstream uses this ordering.
std::vector<std::size_t> quantizable_layers(const ModelGraph& model);
std::vector<std::size_t> batchnorm_layers(const ModelGraph& model);

}  // namespace hwq
