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
#include <span>
#include <string_view>
#include <vector>

#include "hwq/model.hpp"
#include "hwq/tensor.hpp"

namespace hwq::sensitivity {

enum class Method { kMqe, kNaive };

std::string_view to_string(Method method);
Method parse_method(std::string_view text);

struct MaskSpec {
  double alpha = 0.5;
  std::uint64_t seed = 0;
  std::size_t layer = 0;  // quantizable-layer index
};

// splitmix64 finaliser over (seed, layer); decorrelates per-layer masks.
std::uint64_t layer_subseed(std::uint64_t seed, std::size_t layer);

// round(alpha * n) distinct positions (half away from zero), drawn by a
// partial Fisher-Yates shuffle driven by mt19937_64(layer_subseed(...)).
// Returned in draw order.
std::vector<std::size_t> mask_positions(std::size_t n, const MaskSpec& spec);

// Zeroes the positions chosen by mask_positions; the rest is untouched.
IntTensor mask_weights(const IntTensor& weights, const MaskSpec& spec);

// sum_x p(x) log(p(x) / q(x)). If any q(x) < 1e-12, q is clamped there and
// renormalised.
// Both inputs must be distributions (non-negative, summing to 1 +- 1e-6).
double kl_divergence(std::span<const double> p, std::span<const double> q);

std::vector<double> softmax(std::span<const float> logits);

// Mean over samples of KL(softmax(p_logits[n]) || softmax(q_logits[n])).
double mean_output_kl(const Tensor& p_logits, const Tensor& q_logits);

struct SensitivityReport {
  Method method = Method::kMqe;
  std::vector<double> omega;  // one entry per quantizable layer
  std::size_t batch_size = 0;
  double alpha = 0.0;         // mqe only
  std::uint64_t seed = 0;     // mqe only
  int bits = 8;               // quantization width used
  // Instrumentation: model quantizations performed, masks applied, and
  // forward sweeps run while producing the report.
  std::uint64_t quantizations = 0;
  std::uint64_t mask_passes = 0;
  std::uint64_t forward_passes = 0;
};

// Mask-guided estimate: quantize the whole model once at 8 bits, then for
// each layer mask a fraction alpha of its integer weights and measure the
// output KL against the unmasked 8-bit model.
SensitivityReport mqe_sensitivity(const ModelGraph& model, const Tensor& batch,
                                  double alpha, std::uint64_t seed);

// Reference estimate: quantize one layer at a time to `bits` (32 = leave
// everything at full precision) and measure the output KL against the
// full-precision model. Costs one quantization per layer.
SensitivityReport naive_sensitivity(const ModelGraph& model,
                                    const Tensor& batch, int bits);

}  // namespace hwq::sensitivity
