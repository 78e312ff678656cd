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

#include "hwq/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hwq/error.hpp"

namespace hwq {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require(bool ok, const std::string& what, std::size_t layer,
             ErrorCode code = ErrorCode::kInvalidArgument) {
  if (!ok) throw Error(code, what, layer);
}

bool finite(std::span<const float> v) { return all_finite(v); }

}  // namespace

FeatureShape Conv2d::output_shape(const FeatureShape& in) const {
  if (stride == 0) {
    throw Error(ErrorCode::kInvalidArgument, "conv stride must be positive");
  }
  const std::size_t padded_h = in.height + 2 * padding;
  const std::size_t padded_w = in.width + 2 * padding;
  if (kernel_h == 0 || kernel_w == 0 || kernel_h > padded_h ||
      kernel_w > padded_w) {
    throw Error(ErrorCode::kShapeMismatch,
                "kernel " + std::to_string(kernel_h) + "x" +
                    std::to_string(kernel_w) + " larger than padded input " +
                    std::to_string(padded_h) + "x" + std::to_string(padded_w));
  }
  return {out_channels, (padded_h - kernel_h) / stride + 1,
          (padded_w - kernel_w) / stride + 1};
}

FeatureShape AvgPool::output_shape(const FeatureShape& in) const {
  if (window == 0 || stride == 0 || window > in.height || window > in.width) {
    throw Error(ErrorCode::kShapeMismatch, "pool window does not fit input");
  }
  return {in.channels, (in.height - window) / stride + 1,
          (in.width - window) / stride + 1};
}

std::string_view layer_kind_name(const Layer& layer) {
  return std::visit(
      Overloaded{[](const Conv2d&) { return std::string_view("conv2d"); },
                 [](const BatchNorm&) { return std::string_view("batchnorm"); },
                 [](const ReLU&) { return std::string_view("relu"); },
                 [](const AvgPool&) { return std::string_view("avgpool"); },
                 [](const Linear&) { return std::string_view("linear"); },
                 [](const ResidualAdd&) {
                   return std::string_view("residual_add");
                 }},
      layer);
}

bool has_weights(const Layer& layer) {
  return std::holds_alternative<Conv2d>(layer) ||
         std::holds_alternative<Linear>(layer);
}

const Tensor* layer_weights(const Layer& layer) {
  if (const auto* conv = std::get_if<Conv2d>(&layer)) return &conv->weight;
  if (const auto* fc = std::get_if<Linear>(&layer)) return &fc->weight;
  return nullptr;
}

std::size_t weight_count(const Layer& layer) {
  const Tensor* w = layer_weights(layer);
  return w ? w->size() : 0;
}

std::size_t fp32_param_count(const Layer& layer) {
  return std::visit(
      Overloaded{[](const Conv2d& c) { return c.bias.size(); },
                 [](const Linear& l) { return l.bias.size(); },
                 [](const BatchNorm& b) { return 4 * b.channels; },
                 [](const auto&) { return std::size_t{0}; }},
      layer);
}

std::vector<FeatureShape> infer_shapes(const ModelGraph& model) {
  std::vector<FeatureShape> out;
  out.reserve(model.layers.size());
  FeatureShape cur = model.input_shape;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& layer = model.layers[i];
    try {
      cur = std::visit(
          Overloaded{
              [&](const Conv2d& c) {
                require(cur.channels == c.in_channels,
                        "conv expects " + std::to_string(c.in_channels) +
                            " input channels, got " +
                            std::to_string(cur.channels),
                        i, ErrorCode::kShapeMismatch);
                return c.output_shape(cur);
              },
              [&](const BatchNorm& b) {
                require(cur.channels == b.channels,
                        "batchnorm channel count mismatch", i,
                        ErrorCode::kShapeMismatch);
                return cur;
              },
              [&](const ReLU&) { return cur; },
              [&](const AvgPool& p) { return p.output_shape(cur); },
              [&](const Linear& l) {
                require(cur.elements() == l.in_features,
                        "linear expects " + std::to_string(l.in_features) +
                            " features, got " + std::to_string(cur.elements()),
                        i, ErrorCode::kShapeMismatch);
                return FeatureShape{l.out_features, 1, 1};
              },
              [&](const ResidualAdd& r) {
                require(r.source < i, "residual source must precede the layer",
                        i);
                require(out[r.source] == cur, "residual shapes differ", i,
                        ErrorCode::kShapeMismatch);
                return cur;
              }},
          layer);
    } catch (const Error& e) {
      if (e.layer_index()) throw;
      throw Error(e.code(), e.message(), i);
    }
    out.push_back(cur);
  }
  return out;
}

FeatureShape layer_input_shape(const ModelGraph& model, std::size_t layer) {
  if (layer == 0) return model.input_shape;
  return infer_shapes(model).at(layer - 1);
}

void validate(const ModelGraph& model) {
  if (model.layers.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "model has no layers");
  }
  if (model.input_shape.elements() == 0) {
    throw Error(ErrorCode::kInvalidArgument, "model input shape is empty");
  }
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    std::visit(
        Overloaded{
            [&](const Conv2d& c) {
              require(c.weight.shape() == Shape{c.out_channels, c.in_channels,
                                                c.kernel_h, c.kernel_w},
                      "conv weight shape " + shape_string(c.weight.shape()) +
                          " does not match hyperparameters",
                      i, ErrorCode::kShapeMismatch);
              require(c.bias.empty() || c.bias.size() == c.out_channels,
                      "conv bias length mismatch", i,
                      ErrorCode::kShapeMismatch);
              require(c.stride > 0, "conv stride must be positive", i);
              require(finite(c.weight.data()) && finite(c.bias),
                      "non-finite conv parameters", i,
                      ErrorCode::kNumericFailure);
            },
            [&](const BatchNorm& b) {
              const auto n = b.channels;
              require(b.running_mean.size() == n && b.running_var.size() == n &&
                          b.gamma.size() == n && b.beta.size() == n,
                      "batchnorm vectors must all have length channels", i,
                      ErrorCode::kShapeMismatch);
              require(std::all_of(b.running_var.begin(), b.running_var.end(),
                                  [](float v) { return v > 0.0F; }),
                      "batchnorm running_var must be strictly positive", i);
              require(b.eps >= 0.0F && std::isfinite(b.eps),
                      "batchnorm eps must be finite and non-negative", i);
              require(finite(b.running_mean) && finite(b.running_var) &&
                          finite(b.gamma) && finite(b.beta),
                      "non-finite batchnorm parameters", i,
                      ErrorCode::kNumericFailure);
            },
            [&](const Linear& l) {
              require(l.weight.shape() == Shape{l.out_features, l.in_features},
                      "linear weight shape " + shape_string(l.weight.shape()) +
                          " does not match hyperparameters",
                      i, ErrorCode::kShapeMismatch);
              require(l.bias.empty() || l.bias.size() == l.out_features,
                      "linear bias length mismatch", i,
                      ErrorCode::kShapeMismatch);
              require(finite(l.weight.data()) && finite(l.bias),
                      "non-finite linear parameters", i,
                      ErrorCode::kNumericFailure);
            },
            [&](const auto&) {}},
        model.layers[i]);
  }
  const auto shapes = infer_shapes(model);
  if (shapes.back().elements() != model.class_count) {
    throw Error(ErrorCode::kShapeMismatch,
                "model output has " + std::to_string(shapes.back().elements()) +
                    " values but class_count is " +
                    std::to_string(model.class_count));
  }
}

std::vector<std::size_t> quantizable_layers(const ModelGraph& model) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (has_weights(model.layers[i])) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> batchnorm_layers(const ModelGraph& model) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (std::holds_alternative<BatchNorm>(model.layers[i])) out.push_back(i);
  }
  return out;
}

}  // namespace hwq
