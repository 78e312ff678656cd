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

#include "hwq/distill.hpp"

#include <cmath>
#include <random>
#include <string>

#include "hwq/error.hpp"

namespace hwq::distill {

void validate(const DistillConfig& config) {
  if (config.batch < 1) {
    throw Error(ErrorCode::kConfig, "distill.batch must be at least 1");
  }
  if (config.steps < 1) {
    throw Error(ErrorCode::kConfig, "distill.steps must be at least 1");
  }
  if (!(config.learning_rate > 0.0) || !std::isfinite(config.learning_rate)) {
    throw Error(ErrorCode::kConfig, "distill.learning_rate must be positive");
  }
}

double bn_stat_loss(const ForwardTrace& trace, const ModelGraph& model) {
  const auto targets = bn_targets(model);
  if (trace.bn.size() != targets.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "trace has " + std::to_string(trace.bn.size()) +
                    " batchnorm entries, model has " +
                    std::to_string(targets.size()));
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const BnStats& obs = trace.bn[i];
    const BnStats& tgt = targets[i];
    if (obs.mean.size() != tgt.mean.size() || obs.std.size() != tgt.std.size()) {
      throw Error(ErrorCode::kShapeMismatch, "trace channel count", tgt.layer);
    }
    for (std::size_t c = 0; c < tgt.mean.size(); ++c) {
      const double dm = obs.mean[c] - tgt.mean[c];
      const double ds = obs.std[c] - tgt.std[c];
      loss += dm * dm + ds * ds;
    }
  }
  return loss;
}

SyntheticBatch synthesize(const ModelGraph& model, const DistillConfig& config) {
  validate(config);
  if (batchnorm_layers(model).empty()) {
    throw Error(ErrorCode::kUnsupported,
                "data synthesis needs at least one batchnorm layer");
  }
  const FeatureShape& in = model.input_shape;
  Tensor x({config.batch, in.channels, in.height, in.width});
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<float> normal(0.0F, 1.0F);
  for (auto& v : x.data()) v = normal(rng);

  const auto targets = bn_targets(model);
  SyntheticBatch out;
  out.seed = config.seed;
  StatLossGradient step = input_gradient(model, x, targets);
  out.initial_loss = step.loss;
  const float lr = static_cast<float>(config.learning_rate);
  std::size_t above = 0;

  for (std::size_t s = 1; s <= config.steps; ++s) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= lr * step.gradient[i];
    double loss = 0.0;
    if (s < config.steps) {
      step = input_gradient(model, x, targets);
      loss = step.loss;
    } else {
      loss = bn_stat_loss(*forward(model, x, true).trace, model);
    }
    if (!std::isfinite(loss) || !all_finite(x.data())) {
      throw Error(ErrorCode::kNumericFailure,
                  "synthesis produced non-finite values at step " +
                      std::to_string(s) + "; try a smaller learning rate");
    }
    out.loss_history.push_back(loss);
    above = loss > kDivergenceFactor * out.initial_loss ? above + 1 : 0;
    if (above >= kDivergencePatience) {
      throw Error(ErrorCode::kNumericFailure,
                  "synthesis diverged: loss stayed above 10x its initial value "
                  "for 50 steps; try a smaller learning rate");
    }
  }
  out.final_loss = out.loss_history.back();
  out.data = std::move(x);
  return out;
}

}  // namespace hwq::distill
