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

#include "hwq/quant.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hwq/engine.hpp"
#include "hwq/error.hpp"

namespace hwq::quant {

namespace {

thread_local std::uint64_t g_quantizations = 0;

void require_finite(std::span<const float> values) {
  if (!all_finite(values)) {
    throw Error(ErrorCode::kNumericFailure, "cannot quantize non-finite values");
  }
}

std::shared_ptr<const LayerQuant> make_layer(const ModelGraph& model,
                                             std::size_t layer,
                                             std::optional<int> weight_bits,
                                             std::optional<int> act_bits,
                                             const Tensor* act_input) {
  auto lq = std::make_shared<LayerQuant>();
  lq->layer = layer;
  const Tensor& w = *layer_weights(model.layers[layer]);
  if (weight_bits) {
    lq->weight_params = calibrate_minmax(w.data(), *weight_bits, true);
    lq->weight_q = quantize(w, *lq->weight_params);
    lq->weight_dq = dequantize(lq->weight_q, *lq->weight_params);
  }
  if (act_bits) {
    lq->activation_params =
        calibrate_minmax(act_input->data(), *act_bits, false);
  }
  return lq;
}

// Full-precision inputs of every layer for activation calibration.
std::vector<Tensor> calibration_inputs(const ModelGraph& model,
                                       const Tensor& calib_batch) {
  ForwardOptions opts;
  opts.keep_activations = true;
  ForwardResult r = forward(model, calib_batch, opts);
  std::vector<Tensor> inputs;
  inputs.reserve(model.layers.size());
  inputs.push_back(calib_batch);
  auto& acts = r.trace->activations;
  for (std::size_t i = 0; i + 1 < acts.size(); ++i) {
    inputs.push_back(std::move(acts[i]));
  }
  return inputs;
}

}  // namespace

bool is_supported_bits(int bits) { return bits == 4 || bits == 8; }

void validate(const QuantParams& p) {
  if (!is_supported_bits(p.bits)) {
    throw Error(ErrorCode::kInvalidArgument,
                "bit width must be 4 or 8, got " + std::to_string(p.bits));
  }
  if (!(p.scale > 0.0) || !std::isfinite(p.scale)) {
    throw Error(ErrorCode::kInvalidArgument, "scale must be positive");
  }
  if (p.symmetric && p.zero_point != 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "symmetric quantization needs zero_point 0");
  }
}

QuantParams calibrate_minmax(std::span<const float> values, int bits,
                             bool symmetric) {
  if (values.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "cannot calibrate an empty tensor");
  }
  require_finite(values);
  if (!is_supported_bits(bits)) {
    throw Error(ErrorCode::kInvalidArgument,
                "bit width must be 4 or 8, got " + std::to_string(bits));
  }
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  QuantParams p;
  p.bits = bits;
  p.symmetric = symmetric;
  if (lo == hi) {
    p.scale = 1.0;
    p.zero_point = symmetric ? 0 : static_cast<std::int32_t>(std::round(lo));
    return p;
  }
  if (symmetric) {
    p.scale = std::max(std::abs(lo), std::abs(hi)) / (p.qmax());
    p.zero_point = 0;
  } else {
    p.scale = (hi - lo) / static_cast<double>((std::int64_t{1} << bits) - 1);
    p.zero_point = static_cast<std::int32_t>(std::round(lo / p.scale)) - p.qmin();
  }
  return p;
}

std::int32_t quantize_value(double x, const QuantParams& p) {
  const double q = std::round(x / p.scale) - static_cast<double>(p.zero_point);
  return static_cast<std::int32_t>(
      std::clamp(q, static_cast<double>(p.qmin()), static_cast<double>(p.qmax())));
}

double dequantize_value(std::int32_t q, const QuantParams& p) {
  return p.scale * (static_cast<double>(q) + static_cast<double>(p.zero_point));
}

IntTensor quantize(const Tensor& values, const QuantParams& params) {
  validate(params);
  require_finite(values.data());
  std::vector<std::int32_t> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = quantize_value(values[i], params);
  }
  return IntTensor(values.shape(), std::move(out));
}

Tensor dequantize(const IntTensor& values, const QuantParams& params) {
  validate(params);
  std::vector<float> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = static_cast<float>(dequantize_value(values[i], params));
  }
  return Tensor(values.shape(), std::move(out));
}

Tensor fake_quantize(const Tensor& values, const QuantParams& params) {
  return dequantize(quantize(values, params), params);
}

BitConfig BitConfig::uniform(std::size_t layers, int bits) {
  return {std::vector<int>(layers, bits), std::vector<int>(layers, bits)};
}

void validate(const BitConfig& config, std::size_t quantizable_count) {
  if (config.weight_bits.size() != quantizable_count ||
      config.activation_bits.size() != quantizable_count) {
    throw Error(ErrorCode::kInvalidArgument,
                "bit config has " + std::to_string(config.weight_bits.size()) +
                    "/" + std::to_string(config.activation_bits.size()) +
                    " entries, model has " + std::to_string(quantizable_count) +
                    " quantizable layers");
  }
  for (std::size_t i = 0; i < quantizable_count; ++i) {
    if (!is_supported_bits(config.weight_bits[i]) ||
        !is_supported_bits(config.activation_bits[i])) {
      throw Error(ErrorCode::kInvalidArgument, "bit widths must be 4 or 8", i);
    }
  }
}

QuantizedModel::QuantizedModel(
    std::shared_ptr<const ModelGraph> base,
    std::vector<std::shared_ptr<const LayerQuant>> layers)
    : base_(std::move(base)), layers_(std::move(layers)) {}

const LayerQuant& QuantizedModel::layer(std::size_t quantizable_index) const {
  return *layers_.at(quantizable_index);
}

QuantizedModel QuantizedModel::with_integer_weights(
    std::size_t quantizable_index, IntTensor weights) const {
  const LayerQuant& src = layer(quantizable_index);
  if (!src.weight_params) {
    throw Error(ErrorCode::kInvalidArgument,
                "layer weights are not quantized", src.layer);
  }
  if (weights.shape() != src.weight_q.shape()) {
    throw Error(ErrorCode::kShapeMismatch, "replacement weights differ",
                src.layer);
  }
  auto lq = std::make_shared<LayerQuant>(src);
  lq->weight_dq = dequantize(weights, *lq->weight_params);
  lq->weight_q = std::move(weights);
  auto layers = layers_;
  layers[quantizable_index] = std::move(lq);
  return QuantizedModel(base_, std::move(layers));
}

QuantizedModel quantize_model(const ModelGraph& model, const BitConfig& config,
                              const Tensor& calib_batch) {
  const auto qlayers = quantizable_layers(model);
  validate(config, qlayers.size());
  ++g_quantizations;
  const auto inputs = calibration_inputs(model, calib_batch);
  std::vector<std::shared_ptr<const LayerQuant>> layers;
  for (std::size_t q = 0; q < qlayers.size(); ++q) {
    layers.push_back(make_layer(model, qlayers[q], config.weight_bits[q],
                                config.activation_bits[q], &inputs[qlayers[q]]));
  }
  return QuantizedModel(std::make_shared<const ModelGraph>(model),
                        std::move(layers));
}

QuantizedModel quantize_single_layer(const ModelGraph& model,
                                     std::size_t quantizable_index, int bits,
                                     const Tensor& calib_batch) {
  const auto qlayers = quantizable_layers(model);
  if (quantizable_index >= qlayers.size()) {
    throw Error(ErrorCode::kInvalidArgument, "quantizable layer out of range");
  }
  ++g_quantizations;
  const auto inputs = calibration_inputs(model, calib_batch);
  std::vector<std::shared_ptr<const LayerQuant>> layers;
  for (std::size_t q = 0; q < qlayers.size(); ++q) {
    if (q == quantizable_index) {
      layers.push_back(
          make_layer(model, qlayers[q], bits, bits, &inputs[qlayers[q]]));
    } else {
      layers.push_back(
          make_layer(model, qlayers[q], std::nullopt, std::nullopt, nullptr));
    }
  }
  return QuantizedModel(std::make_shared<const ModelGraph>(model),
                        std::move(layers));
}

QuantizedModel passthrough(const ModelGraph& model) {
  std::vector<std::shared_ptr<const LayerQuant>> layers;
  for (std::size_t layer : quantizable_layers(model)) {
    layers.push_back(
        make_layer(model, layer, std::nullopt, std::nullopt, nullptr));
  }
  return QuantizedModel(std::make_shared<const ModelGraph>(model),
                        std::move(layers));
}

Tensor quantized_forward(const QuantizedModel& qmodel, const Tensor& batch) {
  const ModelGraph& model = qmodel.base();
  ExecutionHooks hooks;
  hooks.weights.assign(model.layers.size(), nullptr);
  std::vector<const QuantParams*> act(model.layers.size(), nullptr);
  for (std::size_t q = 0; q < qmodel.layer_count(); ++q) {
    const LayerQuant& lq = qmodel.layer(q);
    if (lq.weight_params) hooks.weights[lq.layer] = &lq.weight_dq;
    if (lq.activation_params) act[lq.layer] = &*lq.activation_params;
  }
  hooks.before_weighted_layer = [&act](std::size_t layer, Tensor& input) {
    if (act[layer]) input = fake_quantize(input, *act[layer]);
  };
  return forward(model, batch, ForwardOptions{}, &hooks).logits;
}

std::uint64_t quantization_count() { return g_quantizations; }

ModelSize model_size(const ModelGraph& model, const BitConfig& config) {
  const auto qlayers = quantizable_layers(model);
  validate(config, qlayers.size());
  return model_size(model, config.weight_bits);
}

ModelSize model_size(const ModelGraph& model, std::span<const int> weight_bits) {
  const auto qlayers = quantizable_layers(model);
  if (weight_bits.size() != qlayers.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "need one bit width per quantizable layer");
  }
  ModelSize size;
  for (std::size_t q = 0; q < qlayers.size(); ++q) {
    if (weight_bits[q] <= 0) {
      throw Error(ErrorCode::kInvalidArgument, "bit width must be positive", q);
    }
    size.weight_bits += weight_count(model.layers[qlayers[q]]) *
                        static_cast<std::uint64_t>(weight_bits[q]);
  }
  for (const Layer& layer : model.layers) {
    size.fp32_bits += fp32_param_count(layer) * 32U;
  }
  return size;
}

}  // namespace hwq::quant
