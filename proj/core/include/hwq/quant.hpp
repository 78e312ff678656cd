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

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "hwq/model.hpp"
#include "hwq/tensor.hpp"

namespace hwq::quant {

// Affine map between reals and b-bit signed integers:
//   q = clamp(round(x / scale) - zero_point, qmin, qmax)
//   x ~ scale * (q + zero_point)
// The zero point is subtracted on the way in, so dequantization adds it back.
struct QuantParams {
  double scale = 1.0;
  std::int32_t zero_point = 0;
  int bits = 8;
  bool symmetric = true;

  std::int32_t qmin() const { return -(std::int32_t{1} << (bits - 1)); }
  std::int32_t qmax() const { return (std::int32_t{1} << (bits - 1)) - 1; }
  // Real interval that quantizes without saturation.
  double range_min() const { return scale * (qmin() + zero_point); }
  double range_max() const { return scale * (qmax() + zero_point); }

  friend bool operator==(const QuantParams&, const QuantParams&) = default;
};

bool is_supported_bits(int bits);
void validate(const QuantParams& params);

// Min-max calibration. Symmetric: scale = max(|min|, |max|) / (2^(b-1) - 1),
// zero_point = 0. Asymmetric: scale = (max - min) / (2^b - 1) with the zero
// point chosen so `min` lands on qmin. A constant input gets scale 1.
QuantParams calibrate_minmax(std::span<const float> values, int bits,
                             bool symmetric);

// Rounds half away from zero.
std::int32_t quantize_value(double x, const QuantParams& params);
double dequantize_value(std::int32_t q, const QuantParams& params);

IntTensor quantize(const Tensor& values, const QuantParams& params);
Tensor dequantize(const IntTensor& values, const QuantParams& params);
Tensor fake_quantize(const Tensor& values, const QuantParams& params);

struct BitConfig {
  std::vector<int> weight_bits;      // one entry per quantizable layer
  std::vector<int> activation_bits;  // one entry per quantizable layer

  static BitConfig uniform(std::size_t layers, int bits);
  friend bool operator==(const BitConfig&, const BitConfig&) = default;
};

void validate(const BitConfig& config, std::size_t quantizable_count);

// Quantization state of one weighted layer. Either side may be absent, which
// leaves it at full precision.
struct LayerQuant {
  std::size_t layer = 0;  // index into the model's layer list
  std::optional<QuantParams> weight_params;
  IntTensor weight_q;
  Tensor weight_dq;
  std::optional<QuantParams> activation_params;
};

// Fake-quantized model: integer weights plus the real-valued carrier used for
// inference. Immutable once built; copies share layer state.
class QuantizedModel {
 public:
  QuantizedModel(std::shared_ptr<const ModelGraph> base,
                 std::vector<std::shared_ptr<const LayerQuant>> layers);

  const ModelGraph& base() const { return *base_; }
  std::size_t layer_count() const { return layers_.size(); }
  const LayerQuant& layer(std::size_t quantizable_index) const;

  // Copy with one layer's integer weights replaced (re-dequantized with the
  // layer's existing params). Other layers are shared, never modified.
  QuantizedModel with_integer_weights(std::size_t quantizable_index,
                                      IntTensor weights) const;

 private:
  std::shared_ptr<const ModelGraph> base_;
  std::vector<std::shared_ptr<const LayerQuant>> layers_;
};

// Weights: symmetric per-tensor min-max. Activations: asymmetric per-tensor
// min-max over the input each weighted layer sees in one full-precision
// forward pass of `calib_batch`.
QuantizedModel quantize_model(const ModelGraph& model, const BitConfig& config,
                              const Tensor& calib_batch);

// Only quantizable layer `quantizable_index` is quantized (weights and input
// activations); everything else stays full precision.
QuantizedModel quantize_single_layer(const ModelGraph& model,
                                     std::size_t quantizable_index, int bits,
                                     const Tensor& calib_batch);

// Nothing quantized; quantized_forward then matches forward bitwise.
QuantizedModel passthrough(const ModelGraph& model);

Tensor quantized_forward(const QuantizedModel& model, const Tensor& batch);

// Number of quantize_model / quantize_single_layer calls made on the calling
// thread. Used to instrument the sensitivity estimators.
std::uint64_t quantization_count();

struct ModelSize {
  std::uint64_t weight_bits = 0;  // sum of weight count x b_i
  std::uint64_t fp32_bits = 0;    // BN parameters and biases at 32 bits

  std::uint64_t total_bits() const { return weight_bits + fp32_bits; }
  double megabits() const { return static_cast<double>(total_bits()) / 1e6; }
};

ModelSize model_size(const ModelGraph& model, const BitConfig& config);
ModelSize model_size(const ModelGraph& model, std::span<const int> weight_bits);

}  // namespace hwq::quant
