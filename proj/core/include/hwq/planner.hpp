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
#include <optional>
#include <span>
#include <vector>

#include "hwq/hwsim.hpp"
#include "hwq/model.hpp"
#include "hwq/sensitivity.hpp"

namespace hwq::plan {

struct PlannerConfig {
  double beta = 0.5;
  double gamma = 0.5;
  // Exactly one of ratio / limit_bits is used; ratio wins when both are set.
  // ratio interpolates the total model size between all-4 and all-8.
  std::optional<double> ratio = 0.5;
  std::optional<std::uint64_t> limit_bits;
};

void validate(const PlannerConfig& config);

// Min-max scaling to [0, 1]; a constant vector maps to zeros.
std::vector<double> normalize(std::span<const double> values);

// beta * w - (gamma / 2) * (c + e), elementwise. beta + gamma must be 1.
std::vector<double> omega(std::span<const double> w_hat,
                          std::span<const double> c_hat,
                          std::span<const double> e_hat, double beta,
                          double gamma);

struct SolverStats {
  std::uint64_t cells = 0;   // DP cells evaluated
  std::uint64_t unit = 0;    // size unit of the DP, in bits
  double runtime_ms = 0.0;
};

struct PlanResult {
  std::vector<int> bits;        // 4 or 8 per quantizable layer
  double objective = 0.0;       // sum of bits[i] * omega[i]
  std::uint64_t achieved = 0;   // size in bits, including fixed_bits
  std::uint64_t limit = 0;
  SolverStats stats;
};

// Exact maximiser of sum b_i * omega_i over b_i in {4, 8} subject to
// fixed_bits + sum size_i(b_i) <= limit. Layers with omega_i <= 0 stay at
// 4 bits. Among optimal plans, lower layer indices are upgraded first.
// Throws kInfeasible when even the all-4 plan exceeds the limit.
PlanResult solve_bitplan(std::span<const double> omega,
                         std::span<const std::uint64_t> sizes4,
                         std::span<const std::uint64_t> sizes8,
                         std::uint64_t limit, std::uint64_t fixed_bits = 0);

// Sum of b_i * omega_i in index order.
double plan_objective(std::span<const int> bits, std::span<const double> omega);

struct LayerMetrics {
  std::vector<double> w, c, e;              // raw
  std::vector<double> w_hat, c_hat, e_hat;  // normalized
  std::vector<double> omega;
};

struct PlanOutcome {
  LayerMetrics metrics;
  PlanResult result;
  std::uint64_t size4 = 0;  // whole-model sizes in bits
  std::uint64_t size8 = 0;
};

// Total size limit in bits implied by the config for this model.
std::uint64_t resolve_limit(const ModelGraph& model, const PlannerConfig& config);

// Normalizes sensitivity and the 8-bit cycle/energy columns of the profile,
// fuses them into omega and solves under the configured limit.
PlanOutcome plan_pipeline(const ModelGraph& model,
                          const sensitivity::SensitivityReport& report,
                          const hw::HwProfile& profile,
                          const PlannerConfig& config);

}  // namespace hwq::plan
