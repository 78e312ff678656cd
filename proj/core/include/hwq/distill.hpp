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
#include <vector>

#include "hwq/engine.hpp"
#include "hwq/model.hpp"

namespace hwq::distill {

struct DistillConfig {
  std::size_t batch = 32;
  std::size_t steps = 500;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;
};

void validate(const DistillConfig& config);

struct SyntheticBatch {
  Tensor data;                       // (N, C, H, W)
  double initial_loss = 0.0;         // loss of the random initialisation
  double final_loss = 0.0;           // == loss_history.back()
  std::vector<double> loss_history;  // loss after each step
  std::uint64_t seed = 0;
};

// Sum over BatchNorm layers of ||observed mean - running_mean||^2 +
// ||observed std - sqrt(running_var)||^2.
double bn_stat_loss(const ForwardTrace& trace, const ModelGraph& model);

// Plain fixed-step gradient descent on the BN-statistic loss, starting from
// a seeded standard normal batch. Deterministic for a fixed config.
SyntheticBatch synthesize(const ModelGraph& model, const DistillConfig& config);

// Consecutive steps above 10x the initial loss that count as divergence.
inline constexpr std::size_t kDivergencePatience = 50;
inline constexpr double kDivergenceFactor = 10.0;

}  // namespace hwq::distill
