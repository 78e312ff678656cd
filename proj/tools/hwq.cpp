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

// Command-line front end. Stages share one set of flags; the config file
// supplies everything else. Log level comes from SPDLOG_LEVEL.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/cfg/env.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "hwq/dataset.hpp"
#include "hwq/error.hpp"
#include "hwq/fixtures.hpp"
#include "hwq/model_io.hpp"
#include "hwq/pipeline.hpp"

namespace {

namespace fs = std::filesystem;
namespace pl = hwq::pipeline;

enum Exit : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kInfeasiblePlan = 3,
  kNumericFailure = 4,
  kMissingArtifact = 5,
};

int exit_code(hwq::ErrorCode code) {
  switch (code) {
    case hwq::ErrorCode::kConfig: return kConfigError;
    case hwq::ErrorCode::kInfeasible: return kInfeasiblePlan;
    case hwq::ErrorCode::kNumericFailure: return kNumericFailure;
    case hwq::ErrorCode::kMissingArtifact: return kMissingArtifact;
    default: return kFailure;
  }
}

struct Flags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> ratio;
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<std::string> method;
  std::optional<std::string> activations;
};

void add_stage_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "Pipeline config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", f.out, "Output directory (overrides output_dir)");
  cmd->add_option("--seed", f.seed, "Seed for synthesis and masking");
  cmd->add_option("--ratio", f.ratio, "Size limit between all-4 (0) and all-8 (1)")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--alpha", f.alpha, "Mask ratio")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--beta", f.beta, "Sensitivity weight; gamma = 1 - beta")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--method", f.method, "Sensitivity method")
      ->check(CLI::IsMember({"mqe", "naive"}));
  cmd->add_option("--bits-activations", f.activations,
                  "Activation widths: follow the plan, or pin at 8")
      ->check(CLI::IsMember({"plan", "8"}));
}

pl::PipelineConfig resolve_config(const Flags& f) {
  pl::PipelineConfig config = pl::load_config(f.config);
  pl::Overrides o;
  if (!f.out.empty()) o.output_dir = fs::path(f.out);
  o.seed = f.seed;
  o.ratio = f.ratio;
  o.alpha = f.alpha;
  o.beta = f.beta;
  if (f.method) o.method = hwq::sensitivity::parse_method(*f.method);
  if (f.activations) o.activations = pl::parse_activation_bits(*f.activations);
  pl::apply(config, o);
  return config;
}

void write_fixtures(const fs::path& dir, const pl::Logger& log) {
  fs::create_directories(dir);
  hwq::save_model(hwq::fixtures::toy_cnn(0), dir / "toy_cnn.json");
  hwq::save_model(hwq::fixtures::tiny_model(0), dir / "tiny.json");
  hwq::save_model(hwq::fixtures::decorrelation_model(), dir / "decorrelation.json");
  hwq::save_labeled_set(dir / "eval_set.json",
                        hwq::make_dataset(hwq::fixtures::toy_eval_spec()));
  log("fixtures: wrote toy_cnn, tiny, decorrelation and eval_set to " + dir.string());
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::cfg::load_env_levels();
  auto logger = spdlog::stderr_color_mt("hwq");
  logger->set_pattern("%^%l%$: %v");
  const pl::Logger log = [&](const std::string& line) { logger->info(line); };

  CLI::App app{"Hardware-aware mixed-precision bit planning for small CNNs", "hwq"};
  app.require_subcommand(1);

  using Stage = std::function<void(const pl::PipelineConfig&, const pl::Logger&)>;
  const std::map<std::string, std::pair<std::string, Stage>> stages = {
      {"distill", {"Synthesize a calibration batch from BN statistics", pl::run_distill}},
      {"sense", {"Estimate per-layer sensitivity", pl::run_sense}},
      {"profile", {"Profile per-layer cycles and energy", pl::run_profile}},
      {"plan", {"Solve the bit allocation", pl::run_plan}},
      {"quantize", {"Quantize the model with the plan", pl::run_quantize}},
      {"eval", {"Evaluate and write the report", pl::run_eval}},
      {"pipeline", {"Run every stage in order", pl::run_all}},
  };

  Flags flags;
  std::map<CLI::App*, Stage> handlers;
  for (const auto& [name, entry] : stages) {
    CLI::App* cmd = app.add_subcommand(name, entry.first);
    add_stage_flags(cmd, flags);
    handlers[cmd] = entry.second;
  }
  std::string fixtures_out = "data";
  CLI::App* fixtures_cmd =
      app.add_subcommand("fixtures", "Write the bundled models and eval set");
  fixtures_cmd->add_option("--out", fixtures_out, "Destination directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (fixtures_cmd->parsed()) {
      write_fixtures(fixtures_out, log);
      return kOk;
    }
    for (const auto& [cmd, run] : handlers) {
      if (cmd->parsed()) run(resolve_config(flags), log);
    }
  } catch (const hwq::Error& e) {
    logger->error(e.what());
    return exit_code(e.code());
  } catch (const std::exception& e) {
    logger->error(e.what());
    return kFailure;
  }
  return kOk;
}
