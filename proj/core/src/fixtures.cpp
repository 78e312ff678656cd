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

#include "hwq/fixtures.hpp"

#include <cmath>
#include <random>
#include <variant>

#include "hwq/engine.hpp"
#include "hwq/error.hpp"

namespace hwq::fixtures {

namespace {

using Rng = std::mt19937_64;

Tensor he_tensor(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<float> normal(
      0.0F, std::sqrt(2.0F / static_cast<float>(fan_in)));
  for (float& v : t.data()) v = normal(rng);
  return t;
}

Conv2d conv(std::size_t in, std::size_t out, std::size_t k, std::size_t stride,
            std::size_t pad, Rng& rng) {
  Conv2d c;
  c.in_channels = in;
  c.out_channels = out;
  c.kernel_h = k;
  c.kernel_w = k;
  c.stride = stride;
  c.padding = pad;
  c.weight = he_tensor({out, in, k, k}, in * k * k, rng);
  c.bias.assign(out, 0.0F);
  return c;
}

Linear linear(std::size_t in, std::size_t out, Rng& rng) {
  Linear l;
  l.in_features = in;
  l.out_features = out;
  l.weight = he_tensor({out, in}, in, rng);
  l.bias.assign(out, 0.0F);
  return l;
}

BatchNorm identity_bn(std::size_t channels) {
  BatchNorm bn;
  bn.channels = channels;
  bn.running_mean.assign(channels, 0.0F);
  bn.running_var.assign(channels, 1.0F);
  bn.gamma.assign(channels, 1.0F);
  bn.beta.assign(channels, 0.0F);
  return bn;
}

BatchNorm random_bn(std::size_t channels, Rng& rng) {
  BatchNorm bn = identity_bn(channels);
  std::uniform_real_distribution<float> mean(-0.5F, 0.5F);
  std::uniform_real_distribution<float> var(0.5F, 2.0F);
  std::uniform_real_distribution<float> gamma(0.8F, 1.2F);
  std::uniform_real_distribution<float> beta(-0.1F, 0.1F);
  for (std::size_t c = 0; c < channels; ++c) {
    bn.running_mean[c] = mean(rng);
    bn.running_var[c] = var(rng);
    bn.gamma[c] = gamma(rng);
    bn.beta[c] = beta(rng);
  }
  return bn;
}

// Nearest-centroid readout: score_k = mu_k . f - |mu_k|^2 / 2.
void fit_centroid_head(Linear& head, const Tensor& features,
                       std::span<const int> labels, std::size_t classes) {
  const std::size_t n = features.dim(0);
  const std::size_t d = features.size() / n;
  std::vector<double> sum(classes * d, 0.0);
  std::vector<std::size_t> count(classes, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(labels[i]);
    ++count[k];
    for (std::size_t j = 0; j < d; ++j) sum[k * d + j] += features[i * d + j];
  }
  for (std::size_t k = 0; k < classes; ++k) {
    double norm2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double mu = count[k] ? sum[k * d + j] / static_cast<double>(count[k]) : 0.0;
      head.weight[k * d + j] = static_cast<float>(mu);
      norm2 += mu * mu;
    }
    head.bias[k] = static_cast<float>(-0.5 * norm2);
  }
}

}  // namespace

void calibrate_batchnorm(ModelGraph& model, const Tensor& data) {
  const auto bns = batchnorm_layers(model);
  for (std::size_t k = 0; k < bns.size(); ++k) {
    const ForwardResult r = forward(model, data, true);
    const BnStats& s = r.trace->bn[k];
    auto& bn = std::get<BatchNorm>(model.layers[bns[k]]);
    for (std::size_t c = 0; c < bn.channels; ++c) {
      bn.running_mean[c] = static_cast<float>(s.mean[c]);
      bn.running_var[c] = static_cast<float>(s.std[c] * s.std[c]);
    }
  }
}

DatasetSpec toy_train_spec() {
  DatasetSpec spec;
  spec.samples = 500;
  spec.noise = 0.5;
  spec.sample_seed = 1;
  return spec;
}

DatasetSpec toy_eval_spec() {
  DatasetSpec spec = toy_train_spec();
  spec.samples = 200;
  spec.sample_seed = 2;
  return spec;
}

ModelGraph toy_cnn(std::uint64_t seed) {
  Rng rng(seed);
  ModelGraph m;
  m.input_shape = {3, 12, 12};
  m.class_count = 10;
  m.layers.emplace_back(conv(3, 8, 3, 1, 1, rng));
  m.layers.emplace_back(identity_bn(8));
  m.layers.emplace_back(ReLU{});
  m.layers.emplace_back(conv(8, 16, 3, 2, 1, rng));
  m.layers.emplace_back(identity_bn(16));
  m.layers.emplace_back(ReLU{});
  m.layers.emplace_back(conv(16, 16, 3, 1, 1, rng));
  m.layers.emplace_back(identity_bn(16));
  m.layers.emplace_back(ReLU{});
  m.layers.emplace_back(ResidualAdd{5});
  m.layers.emplace_back(AvgPool{3, 3});
  m.layers.emplace_back(linear(64, 32, rng));
  m.layers.emplace_back(ReLU{});
  m.layers.emplace_back(linear(32, 10, rng));
  validate(m);

  const LabeledSet train = make_dataset(toy_train_spec());
  calibrate_batchnorm(m, train.images);
  ForwardOptions keep;
  keep.keep_activations = true;
  const ForwardResult r = forward(m, train.images, keep);
  const std::size_t hidden = m.layers.size() - 2;
  fit_centroid_head(std::get<Linear>(m.layers.back()),
                    r.trace->activations[hidden], train.labels, m.class_count);
  validate(m);
  return m;
}

ModelGraph tiny_model(std::uint64_t seed) {
  Rng rng(seed);
  ModelGraph m;
  m.input_shape = {2, 6, 6};
  m.class_count = 5;
  m.layers.emplace_back(conv(2, 4, 3, 1, 1, rng));
  m.layers.emplace_back(random_bn(4, rng));
  m.layers.emplace_back(ReLU{});
  m.layers.emplace_back(conv(4, 4, 3, 2, 1, rng));
  m.layers.emplace_back(random_bn(4, rng));
  m.layers.emplace_back(ReLU{});
  m.layers.emplace_back(linear(36, 5, rng));
  std::uniform_real_distribution<float> bias(-0.1F, 0.1F);
  for (float& b : std::get<Conv2d>(m.layers[0]).bias) b = bias(rng);
  for (float& b : std::get<Linear>(m.layers[6]).bias) b = bias(rng);
  validate(m);
  return m;
}

ModelGraph bn_passthrough_model(const std::vector<float>& mean,
                                const std::vector<float>& var) {
  if (mean.size() != var.size() || mean.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "need one mean and variance per channel");
  }
  const std::size_t c = mean.size();
  ModelGraph m;
  m.input_shape = {c, 2, 2};
  m.class_count = 3;
  BatchNorm bn = identity_bn(c);
  bn.running_mean = mean;
  bn.running_var = var;
  m.layers.emplace_back(std::move(bn));
  Rng rng(0);
  m.layers.emplace_back(linear(c * 4, 3, rng));
  validate(m);
  return m;
}

ModelGraph decorrelation_model() {
  Rng rng(3);
  ModelGraph m;
  m.input_shape = {1, 32, 32};
  m.class_count = 10;
  m.layers.emplace_back(conv(1, 4, 3, 1, 1, rng));
  m.layers.emplace_back(identity_bn(4));
  m.layers.emplace_back(ReLU{});
  m.layers.emplace_back(AvgPool{8, 8});
  m.layers.emplace_back(linear(64, 10, rng));
  validate(m);
  return m;
}

}  // namespace hwq::fixtures
