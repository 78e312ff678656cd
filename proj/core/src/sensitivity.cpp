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

#include "hwq/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "hwq/engine.hpp"
#include "hwq/error.hpp"
#include "hwq/quant.hpp"

namespace hwq::sensitivity {

namespace {

constexpr double kSmoothing = 1e-12;
constexpr double kSumTolerance = 1e-6;

void check_distribution(std::span<const double> d, const char* name) {
  double sum = 0.0;
  for (double v : d) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::kInvalidArgument,
                  std::string(name) + " has a negative or non-finite entry");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string(name) + " does not sum to 1");
  }
}

}  // namespace

std::string_view to_string(Method method) {
  return method == Method::kMqe ? "mqe" : "naive";
}

Method parse_method(std::string_view text) {
  if (text == "mqe") return Method::kMqe;
  if (text == "naive") return Method::kNaive;
  throw Error(ErrorCode::kConfig,
              "sensitivity method must be mqe or naive, got \"" +
                  std::string(text) + "\"");
}

std::uint64_t layer_subseed(std::uint64_t seed, std::size_t layer) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (layer + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<std::size_t> mask_positions(std::size_t n, const MaskSpec& spec) {
  if (!(spec.alpha >= 0.0 && spec.alpha <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "mask ratio must lie in [0, 1]");
  }
  const auto k = static_cast<std::size_t>(
      std::llround(spec.alpha * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(layer_subseed(spec.seed, spec.layer));
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  order.resize(k);
  return order;
}

IntTensor mask_weights(const IntTensor& weights, const MaskSpec& spec) {
  IntTensor out = weights;
  for (std::size_t pos : mask_positions(weights.size(), spec)) out[pos] = 0;
  return out;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "distributions must be non-empty and of equal length");
  }
  check_distribution(p, "p");
  check_distribution(q, "q");
  std::vector<double> qs(q.begin(), q.end());
  if (std::any_of(qs.begin(), qs.end(), [](double v) { return v < kSmoothing; })) {
    double total = 0.0;
    for (double& v : qs) {
      v = std::max(v, kSmoothing);
      total += v;
    }
    for (double& v : qs) v /= total;
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) kl += p[i] * std::log(p[i] / qs[i]);
  }
  return std::max(kl, 0.0);
}

std::vector<double> softmax(std::span<const float> logits) {
  if (logits.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "softmax of an empty vector");
  }
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(static_cast<double>(logits[i]) - peak);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

double mean_output_kl(const Tensor& p_logits, const Tensor& q_logits) {
  if (p_logits.shape() != q_logits.shape() || p_logits.rank() != 2) {
    throw Error(ErrorCode::kShapeMismatch, "logit tensors differ in shape");
  }
  const std::size_t n = p_logits.dim(0);
  const std::size_t k = p_logits.dim(1);
  double sum = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    const auto p = softmax(p_logits.data().subspan(s * k, k));
    const auto q = softmax(q_logits.data().subspan(s * k, k));
    sum += kl_divergence(p, q);
  }
  return sum / static_cast<double>(n);
}

SensitivityReport mqe_sensitivity(const ModelGraph& model, const Tensor& batch,
                                  double alpha, std::uint64_t seed) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "mask ratio must lie in [0, 1]");
  }
  SensitivityReport report;
  report.method = Method::kMqe;
  report.alpha = alpha;
  report.seed = seed;
  report.bits = 8;
  report.batch_size = batch.rank() > 0 ? batch.dim(0) : 0;

  const std::uint64_t before = quant::quantization_count();
  const auto layers = quantizable_layers(model);
  const quant::QuantizedModel base = quant::quantize_model(
      model, quant::BitConfig::uniform(layers.size(), 8), batch);
  const Tensor reference = quant::quantized_forward(base, batch);
  ++report.forward_passes;

  report.omega.reserve(layers.size());
  for (std::size_t q = 0; q < layers.size(); ++q) {
    const IntTensor masked =
        mask_weights(base.layer(q).weight_q, MaskSpec{alpha, seed, q});
    ++report.mask_passes;
    try {
      const Tensor out = quant::quantized_forward(
          base.with_integer_weights(q, masked), batch);
      ++report.forward_passes;
      report.omega.push_back(mean_output_kl(reference, out));
    } catch (const Error& e) {
      if (e.layer_index()) throw;
      throw Error(e.code(), e.message(), layers[q]);
    }
  }
  report.quantizations = quant::quantization_count() - before;
  return report;
}

SensitivityReport naive_sensitivity(const ModelGraph& model,
                                    const Tensor& batch, int bits) {
  if (bits != 32 && !quant::is_supported_bits(bits)) {
    throw Error(ErrorCode::kInvalidArgument,
                "naive sensitivity bits must be 4, 8 or 32");
  }
  SensitivityReport report;
  report.method = Method::kNaive;
  report.bits = bits;
  report.batch_size = batch.rank() > 0 ? batch.dim(0) : 0;

  const std::uint64_t before = quant::quantization_count();
  const Tensor reference = forward(model, batch).logits;
  ++report.forward_passes;
  const auto layers = quantizable_layers(model);
  for (std::size_t q = 0; q < layers.size(); ++q) {
    const quant::QuantizedModel variant =
        bits == 32 ? quant::passthrough(model)
                   : quant::quantize_single_layer(model, q, bits, batch);
    const Tensor out = quant::quantized_forward(variant, batch);
    ++report.forward_passes;
    report.omega.push_back(mean_output_kl(reference, out));
  }
  report.quantizations = quant::quantization_count() - before;
  return report;
}

}  // namespace hwq::sensitivity
