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

#include "hwq/planner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "hwq/error.hpp"
#include "hwq/quant.hpp"

namespace hwq::plan {

namespace {

constexpr double kWeightTolerance = 1e-9;
constexpr std::uint64_t kMaxCells = std::uint64_t{1} << 31;

bool better(double candidate, double incumbent) {
  return candidate > incumbent + 1e-12 * (1.0 + std::abs(incumbent));
}

void check_weights(double beta, double gamma) {
  if (!(beta >= 0.0) || !(gamma >= 0.0)) {
    throw Error(ErrorCode::kConfig, "planner.beta and planner.gamma must be >= 0");
  }
  if (std::abs(beta + gamma - 1.0) > kWeightTolerance) {
    throw Error(ErrorCode::kConfig, "planner.beta + planner.gamma must equal 1");
  }
}

}  // namespace

void validate(const PlannerConfig& config) {
  check_weights(config.beta, config.gamma);
  if (config.ratio && !(*config.ratio >= 0.0 && *config.ratio <= 1.0)) {
    throw Error(ErrorCode::kConfig, "planner.ratio must lie in [0, 1]");
  }
  if (!config.ratio && !config.limit_bits) {
    throw Error(ErrorCode::kConfig, "planner needs ratio or limit_bits");
  }
}

std::vector<double> normalize(std::span<const double> values) {
  std::vector<double> out(values.size(), 0.0);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double span = *hi - *lo;
  if (!(span > 0.0)) return out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = std::clamp((values[i] - *lo) / span, 0.0, 1.0);
  }
  return out;
}

std::vector<double> omega(std::span<const double> w_hat,
                          std::span<const double> c_hat,
                          std::span<const double> e_hat, double beta,
                          double gamma) {
  check_weights(beta, gamma);
  if (c_hat.size() != w_hat.size() || e_hat.size() != w_hat.size()) {
    throw Error(ErrorCode::kShapeMismatch, "metric vectors differ in length");
  }
  std::vector<double> out(w_hat.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = beta * w_hat[i] - gamma / 2.0 * (c_hat[i] + e_hat[i]);
  }
  return out;
}

double plan_objective(std::span<const int> bits, std::span<const double> omega) {
  double sum = 0.0;
  for (std::size_t i = 0; i < bits.size(); ++i) sum += bits[i] * omega[i];
  return sum;
}

PlanResult solve_bitplan(std::span<const double> omega,
                         std::span<const std::uint64_t> sizes4,
                         std::span<const std::uint64_t> sizes8,
                         std::uint64_t limit, std::uint64_t fixed_bits) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = omega.size();
  if (sizes4.size() != n || sizes8.size() != n) {
    throw Error(ErrorCode::kShapeMismatch, "omega and size vectors differ in length");
  }
  std::uint64_t base = fixed_bits;
  for (std::size_t i = 0; i < n; ++i) {
    if (sizes8[i] < sizes4[i]) {
      throw Error(ErrorCode::kInvalidArgument, "8-bit size below 4-bit size", i);
    }
    if (!std::isfinite(omega[i])) {
      throw Error(ErrorCode::kInvalidArgument, "non-finite merit", i);
    }
    base += sizes4[i];
  }
  if (limit < base) {
    throw Error(ErrorCode::kInfeasible,
                "size limit " + std::to_string(limit) +
                    " bits is below the all-4-bit size " + std::to_string(base));
  }

  // Upgrade items: layers whose merit is positive.
  std::vector<std::size_t> items;
  std::uint64_t unit = 0;
  std::uint64_t all_cost = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (omega[i] <= 0.0) continue;
    items.push_back(i);
    const std::uint64_t d = sizes8[i] - sizes4[i];
    unit = std::gcd(unit, d);
    all_cost += d;
  }
  std::vector<std::uint64_t> cost(items.size());
  const std::uint64_t unit_or_one = unit == 0 ? 1 : unit;
  for (std::size_t k = 0; k < items.size(); ++k) {
    cost[k] = (sizes8[items[k]] - sizes4[items[k]]) / unit_or_one;
  }
  const std::uint64_t cap =
      std::min(limit - base, all_cost) / unit_or_one;
  const std::uint64_t width = cap + 1;
  if (static_cast<double>(width) * static_cast<double>(items.size()) >
      static_cast<double>(kMaxCells)) {
    throw Error(ErrorCode::kUnsupported, "knapsack table too large");
  }

  // value[c]: best gain of items k..end within capacity c. Items are folded
  // in reverse so that forward reconstruction can prefer taking lower
  // indices on ties.
  std::vector<double> value(width, 0.0);
  std::vector<bool> take(items.size() * width, false);
  SolverStats stats;
  for (std::size_t k = items.size(); k-- > 0;) {
    const double gain = 4.0 * omega[items[k]];
    const std::uint64_t w = cost[k];
    for (std::uint64_t c = cap + 1; c-- > w;) {
      const double with = value[c - w] + gain;
      if (!better(value[c], with)) {
        value[c] = with;
        take[k * width + c] = true;
      }
    }
    stats.cells += width;
  }

  PlanResult result;
  result.bits.assign(n, 4);
  std::uint64_t c = cap;
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (take[k * width + c]) {
      result.bits[items[k]] = 8;
      c -= cost[k];
    }
  }
  result.objective = plan_objective(result.bits, omega);
  result.achieved = fixed_bits;
  for (std::size_t i = 0; i < n; ++i) {
    result.achieved += result.bits[i] == 8 ? sizes8[i] : sizes4[i];
  }
  result.limit = limit;
  stats.unit = unit_or_one;
  stats.runtime_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - start)
                         .count();
  result.stats = stats;
  return result;
}

std::uint64_t resolve_limit(const ModelGraph& model, const PlannerConfig& config) {
  validate(config);
  const std::size_t n = quantizable_layers(model).size();
  const std::uint64_t size4 =
      quant::model_size(model, std::vector<int>(n, 4)).total_bits();
  const std::uint64_t size8 =
      quant::model_size(model, std::vector<int>(n, 8)).total_bits();
  if (config.ratio) {
    return size4 + static_cast<std::uint64_t>(std::floor(
                       *config.ratio * static_cast<double>(size8 - size4)));
  }
  if (*config.limit_bits > size8) {
    throw Error(ErrorCode::kConfig,
                "planner.limit_bits exceeds the all-8-bit size " +
                    std::to_string(size8));
  }
  return *config.limit_bits;
}

PlanOutcome plan_pipeline(const ModelGraph& model,
                          const sensitivity::SensitivityReport& report,
                          const hw::HwProfile& profile,
                          const PlannerConfig& config) {
  const auto layers = quantizable_layers(model);
  const std::size_t n = layers.size();
  if (report.omega.size() != n) {
    throw Error(ErrorCode::kShapeMismatch,
                "sensitivity report covers " + std::to_string(report.omega.size()) +
                    " layers, model has " + std::to_string(n));
  }
  if (profile.layer_count() != n) {
    throw Error(ErrorCode::kShapeMismatch,
                "hardware profile covers " + std::to_string(profile.layer_count()) +
                    " layers, model has " + std::to_string(n));
  }
  const std::uint64_t limit = resolve_limit(model, config);

  PlanOutcome out;
  LayerMetrics& m = out.metrics;
  m.w = report.omega;
  m.c = profile.cycles(8);
  m.e = profile.energy(8);
  m.w_hat = normalize(m.w);
  m.c_hat = normalize(m.c);
  m.e_hat = normalize(m.e);
  m.omega = omega(m.w_hat, m.c_hat, m.e_hat, config.beta, config.gamma);

  std::vector<std::uint64_t> sizes4(n), sizes8(n);
  for (std::size_t q = 0; q < n; ++q) {
    const auto count = static_cast<std::uint64_t>(weight_count(model.layers[layers[q]]));
    sizes4[q] = 4 * count;
    sizes8[q] = 8 * count;
  }
  const std::uint64_t fixed = quant::model_size(model, std::vector<int>(n, 4)).fp32_bits;
  out.size4 = quant::model_size(model, std::vector<int>(n, 4)).total_bits();
  out.size8 = quant::model_size(model, std::vector<int>(n, 8)).total_bits();
  out.result = solve_bitplan(m.omega, sizes4, sizes8, limit, fixed);
  return out;
}

}  // namespace hwq::plan
