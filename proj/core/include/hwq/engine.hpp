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
#include <functional>
#include <optional>
#include <vector>

#include "hwq/model.hpp"
#include "hwq/tensor.hpp"

namespace hwq {

// Batch statistics of a BatchNorm layer's input, over the batch and spatial
// dims. `std` is the population (biased) standard deviation.
struct BnStats {
  std::size_t layer = 0;
  std::vector<double> mean;
  std::vector<double> std;
};

struct ForwardTrace {
  std::vector<BnStats> bn;            // one entry per BatchNorm, model order
  std::vector<Tensor> activations;    // output of every layer, if kept
};

struct ForwardOptions {
  bool record_stats = false;
  bool keep_activations = false;
};

// Lets the quantized engine substitute weights and transform the input of
// weighted layers without the engine knowing about quantization.
struct ExecutionHooks {
  // Indexed by layer; nullptr (or a short vector) keeps the model weights.
  std::vector<const Tensor*> weights;
  std::function<void(std::size_t layer, Tensor& input)> before_weighted_layer;
};

struct ForwardResult {
  Tensor logits;  // (N, class_count)
  std::optional<ForwardTrace> trace;
};

// Runs the model on an NCHW batch. Safe to call concurrently on the same
// model; all mutable state is per call.
ForwardResult forward(const ModelGraph& model, const Tensor& batch,
                      bool record = false);
ForwardResult forward(const ModelGraph& model, const Tensor& batch,
                      const ForwardOptions& options,
                      const ExecutionHooks* hooks = nullptr);

// Img2Col lowering of one sample: (in_c * k_h * k_w) rows by
// (out_h * out_w) columns. Row order is (c, kh, kw); column order (oh, ow).
Tensor im2col(const Tensor& feature, const Conv2d& conv,
              std::size_t sample = 0);

// Kernel matrix counterpart: out_c rows by (in_c * k_h * k_w) columns.
Tensor kernel_matrix(const Conv2d& conv);

// Convolution of an NCHW batch as kernel_matrix x im2col, bias included.
Tensor conv_via_matmul(const Tensor& feature, const Conv2d& conv);

// Target statistics for the data-synthesis loss: stored running mean and
// sqrt(running_var) of every BatchNorm (eps excluded).
std::vector<BnStats> bn_targets(const ModelGraph& model);

struct StatLossGradient {
  double loss = 0.0;
  Tensor gradient;  // same shape as the batch
};

// Gradient with respect to the input batch of
//   sum_i ||mean_i(x) - u_i||^2 + ||std_i(x) - sigma_i||^2
// over all BatchNorm inputs. Weights are never touched.
StatLossGradient input_gradient(const ModelGraph& model, const Tensor& batch,
                                const std::vector<BnStats>& targets);
StatLossGradient input_gradient(const ModelGraph& model, const Tensor& batch);

}  // namespace hwq
