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
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "hwq/distill.hpp"
#include "hwq/hwsim.hpp"
#include "hwq/model.hpp"
#include "hwq/planner.hpp"
#include "hwq/quant.hpp"
#include "hwq/sensitivity.hpp"

// Stage-by-stage orchestration over an output directory. Each stage reads
// the artifacts of the stages before it and writes its own:
//
//   distill   -> batch.json, batch.bin
//   sense     -> sensitivity.json           (needs batch)
//   profile   -> profile.json, profile.csv
//   plan      -> plan.json                  (needs sensitivity, profile)
//   quantize  -> quantized.json, quantized.bin  (needs plan, batch)
//   eval      -> eval.json, report.json, report.csv  (needs everything)
namespace hwq::pipeline {

namespace fs = std::filesystem;

struct SensitivityConfig {
  sensitivity::Method method = sensitivity::Method::kMqe;
  double alpha = 0.5;
  std::uint64_t seed = 0;
  int naive_bits = 4;
};

struct PipelineConfig {
  std::string model_ref;  // as written in the config
  fs::path model;         // resolved
  fs::path output_dir;
  std::string eval_dataset_ref;
  std::optional<fs::path> eval_dataset;
  hw::HwConfig hw;
  distill::DistillConfig distill;
  SensitivityConfig sensitivity;
  plan::PlannerConfig planner;
  hw::ActivationBits activations = hw::ActivationBits::kFollowWeights;
};

// Relative paths are resolved against base_dir. Unknown keys and bad values
// throw kConfig naming the offending field.
PipelineConfig config_from_json(const nlohmann::json& doc, const fs::path& base_dir);
PipelineConfig load_config(const fs::path& path);
// The settings that determine every artifact (no output directory).
nlohmann::json to_json(const PipelineConfig& config);
void validate(const PipelineConfig& config);

struct Overrides {
  std::optional<fs::path> output_dir;
  std::optional<std::uint64_t> seed;  // distill and mask seeds
  std::optional<double> ratio;
  std::optional<double> alpha;
  std::optional<double> beta;  // gamma becomes 1 - beta
  std::optional<sensitivity::Method> method;
  std::optional<hw::ActivationBits> activations;
};

void apply(PipelineConfig& config, const Overrides& overrides);

hw::ActivationBits parse_activation_bits(std::string_view text);
std::string_view to_string(hw::ActivationBits mode);

// Called with one line per stage summary.
using Logger = std::function<void(const std::string&)>;

void run_distill(const PipelineConfig& config, const Logger& log = {});
void run_sense(const PipelineConfig& config, const Logger& log = {});
void run_profile(const PipelineConfig& config, const Logger& log = {});
void run_plan(const PipelineConfig& config, const Logger& log = {});
void run_quantize(const PipelineConfig& config, const Logger& log = {});
void run_eval(const PipelineConfig& config, const Logger& log = {});
// All stages in order.
void run_all(const PipelineConfig& config, const Logger& log = {});

// Artifact (de)serialization.
nlohmann::json sensitivity_to_json(const sensitivity::SensitivityReport& report);
sensitivity::SensitivityReport sensitivity_from_json(const nlohmann::json& doc);

quant::BitConfig bit_config(std::span<const int> weight_bits,
                            hw::ActivationBits mode);

void save_quantized(const fs::path& manifest, const quant::QuantizedModel& model);
quant::QuantizedModel load_quantized(const fs::path& manifest,
                                     const ModelGraph& base);

// FNV-1a 64 of the compact dump of `doc` with "run_info" and
// "canonical_hash" removed at the top level, as 16 hex digits.
std::string canonical_hash(const nlohmann::json& doc);

}  // namespace hwq::pipeline
