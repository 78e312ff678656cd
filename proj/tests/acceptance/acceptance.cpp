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

// Acceptance run: one PASS/FAIL line per criterion. Exit status is the
// number of failing criteria.

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "hwq/distill.hpp"
#include "hwq/engine.hpp"
#include "hwq/fixtures.hpp"
#include "hwq/hwsim.hpp"
#include "hwq/model_io.hpp"
#include "hwq/pipeline.hpp"
#include "hwq/planner.hpp"
#include "hwq/quant.hpp"
#include "hwq/sensitivity.hpp"
#include "support/oracle.hpp"
#include "support/test_util.hpp"

namespace {

namespace fs = std::filesystem;
namespace pl = hwq::pipeline;
using Clock = std::chrono::steady_clock;

// Pinned tolerances and budgets.
constexpr int kRoundTripSamples = 10000;
constexpr double kRoundTripSlack = 1e-12;  // relative, on S/2
constexpr double kRoundTripBudgetS = 1.0;
constexpr int kIlpInstances = 200;
constexpr std::size_t kIlpMaxLayers = 20;
constexpr double kIlpBudgetS = 30.0;
constexpr double kL64BudgetS = 1.0;
constexpr std::int64_t kEq13MaxSide = 64;
constexpr double kDistillLossTarget = 1e-4;
constexpr std::size_t kDistillSteps = 500;
constexpr double kDistillStatTolerance = 1e-2;
constexpr double kGradientTolerance = 1e-3;
constexpr double kFdStep = 1e-4;
constexpr std::size_t kMisclassificationSlack = 1;
constexpr double kEndToEndBudgetS = 120.0;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
  void note(const std::string& what) {
    if (pass) detail += (detail.empty() ? "" : "; ") + what;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

fs::path data_dir() {
  if (const char* env = std::getenv("HWQ_SOURCE_DIR")) return fs::path(env) / "data";
  return fs::path(HWQ_SOURCE_DIR) / "data";
}

Outcome ac1() {
  namespace q = hwq::quant;
  Outcome o;
  const auto start = Clock::now();
  std::size_t violations = 0;
  for (int bits : {4, 8}) {
    for (bool symmetric : {true, false}) {
      std::mt19937_64 rng(static_cast<std::uint64_t>(bits * 2 + symmetric));
      std::normal_distribution<float> d(0.3F, 1.7F);
      std::vector<float> calib(256);
      for (float& v : calib) v = d(rng);
      const q::QuantParams p = q::calibrate_minmax(calib, bits, symmetric);
      std::uniform_real_distribution<double> u(p.range_min(), p.range_max());
      for (int i = 0; i < kRoundTripSamples; ++i) {
        const double x = u(rng);
        const double err = std::abs(q::dequantize_value(q::quantize_value(x, p), p) - x);
        if (err > 0.5 * p.scale * (1.0 + kRoundTripSlack)) ++violations;
      }
    }
  }
  const double secs = seconds_since(start);
  o.check(violations == 0, std::to_string(violations) + " violations");
  o.check(secs < kRoundTripBudgetS, fmt("took %.3f s", secs));
  o.note("4 modes x 10000 values, 0 violations, " + fmt("%.3f s", secs));
  return o;
}

Outcome ac2() {
  namespace p = hwq::plan;
  Outcome o;
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> merit(-128, 255);
  std::uniform_int_distribution<std::uint64_t> count(1, 4000);
  std::size_t mismatches = 0;
  const auto start = Clock::now();
  for (int t = 0; t < kIlpInstances; ++t) {
    const std::size_t n = 1 + static_cast<std::size_t>(t) % kIlpMaxLayers;
    std::vector<double> omega(n);
    std::vector<std::uint64_t> s4(n), s8(n);
    std::uint64_t lo = 0, hi = 0;
    for (std::size_t i = 0; i < n; ++i) {
      omega[i] = merit(rng) / 256.0;
      const auto c = count(rng);
      s4[i] = 4 * c;
      s8[i] = 8 * c;
      lo += s4[i];
      hi += s8[i];
    }
    const std::uint64_t limit = std::uniform_int_distribution<std::uint64_t>(lo, hi)(rng);
    const double got = p::solve_bitplan(omega, s4, s8, limit).objective;

    std::vector<int> bits(n, 4);
    std::uint64_t size = lo;
    double obj = p::plan_objective(bits, omega), best = obj;
    for (std::uint64_t g = 1; g < (std::uint64_t{1} << n); ++g) {
      const auto i = static_cast<std::size_t>(std::countr_zero(g));
      const bool up = bits[i] == 4;
      bits[i] = up ? 8 : 4;
      size = up ? size + (s8[i] - s4[i]) : size - (s8[i] - s4[i]);
      obj += up ? 4.0 * omega[i] : -4.0 * omega[i];
      if (size <= limit) best = std::max(best, obj);
    }
    if (got != best) ++mismatches;
  }
  const double secs = seconds_since(start);

  std::vector<double> omega(64);
  std::vector<std::uint64_t> s4(64), s8(64);
  std::uniform_real_distribution<double> m(-0.5, 1.0);
  std::uniform_int_distribution<std::uint64_t> big(1000, 20000);
  std::uint64_t lo = 0, hi = 0;
  for (std::size_t i = 0; i < 64; ++i) {
    omega[i] = m(rng);
    const auto c = big(rng);
    s4[i] = 4 * c;
    s8[i] = 8 * c;
    lo += s4[i];
    hi += s8[i];
  }
  const auto t64 = Clock::now();
  p::solve_bitplan(omega, s4, s8, lo + (hi - lo) / 2);
  const double secs64 = seconds_since(t64);

  o.check(mismatches == 0, std::to_string(mismatches) + " objective mismatches");
  o.check(secs < kIlpBudgetS, fmt("200 instances took %.2f s", secs));
  o.check(secs64 < kL64BudgetS, fmt("L=64 took %.3f s", secs64));
  o.note("200/200 exact in " + fmt("%.2f s", secs) + ", L=64 in " + fmt("%.1f ms", secs64 * 1e3));
  return o;
}

Outcome ac3() {
  Outcome o;
  const std::vector<std::pair<std::int64_t, std::int64_t>> pairs{
      {64, 64}, {100, 128}, {80, 64}, {10, 16}, {200, 128}, {140, 64}};
  for (const auto& [side, tile] : pairs) {
    const auto got = hwq::hw::split_side(side, 128, 16);
    o.check(got == tile, std::to_string(side) + " -> " + std::to_string(got) +
                             " (want " + std::to_string(tile) + ")");
  }
  o.note("6/6 pairs");
  return o;
}

Outcome ac4() {
  Outcome o;
  hwq::hw::HwConfig a;
  a.bram_coe_weight = 1;
  a.bram_coe_feature = 1;
  a.bram_coe_output = 2;
  a.bram_total = 140;
  const auto ra = hwq::hw::bram_allocate(a);
  o.check(ra == hwq::hw::BramAllocation{32, 32, 64, 32}, "(1,1,2)/140 gave L_max " +
                                                             std::to_string(ra.l_max));
  hwq::hw::HwConfig b;
  b.bram_coe_weight = b.bram_coe_feature = b.bram_coe_output = 1;
  b.bram_total = 24;
  const auto rb = hwq::hw::bram_allocate(b);
  o.check(rb.l_max == 8, "(1,1,1)/24 gave L_max " + std::to_string(rb.l_max));
  o.note("L_max 32 with (32,32,64); L_max 8");
  return o;
}

Outcome ac5() {
  Outcome o;
  std::size_t checked = 0, bad = 0;
  for (std::int64_t l = 1; l <= kEq13MaxSide; ++l) {
    for (std::int64_t m = 1; m <= l; ++m) {
      if (l % m != 0) continue;
      ++checked;
      if (hwq::hw::simulate_blocked_transfer(l, l, l, m).total() != 3 * l * l * l / m) ++bad;
    }
  }
  o.check(bad == 0, std::to_string(bad) + " of " + std::to_string(checked) + " differ");
  o.note(std::to_string(checked) + " (L, M) pairs exact");
  return o;
}

Outcome ac6() {
  namespace s = hwq::sensitivity;
  Outcome o;
  const auto model = hwq::fixtures::toy_cnn(0);
  const std::size_t layers = hwq::quantizable_layers(model).size();
  const auto batch = hwq::distill::synthesize(model, {32, 100, 10.0, 0}).data;

  const auto zero = s::mqe_sensitivity(model, batch, 0.0, 0);
  for (double w : zero.omega) o.check(w == 0.0, "alpha=0 gave " + fmt("%g", w));

  const auto a = s::mqe_sensitivity(model, batch, 0.5, 3);
  const auto b = s::mqe_sensitivity(model, batch, 0.5, 3);
  for (double w : a.omega) o.check(w >= 0.0, "negative omega");
  o.check(a.omega.size() == b.omega.size() &&
              std::memcmp(a.omega.data(), b.omega.data(), a.omega.size() * sizeof(double)) == 0,
          "repeat run differs");
  o.check(a.quantizations == 1 && a.mask_passes == layers,
          "mqe did " + std::to_string(a.quantizations) + " quantizations, " +
              std::to_string(a.mask_passes) + " masks");
  const auto naive = s::naive_sensitivity(model, batch, 4);
  o.check(naive.quantizations == layers,
          "naive did " + std::to_string(naive.quantizations) + " quantizations");
  o.note("mqe 1 quantization + " + std::to_string(layers) + " masks, naive " +
         std::to_string(naive.quantizations) + " quantizations");
  return o;
}

Outcome ac7() {
  namespace d = hwq::distill;
  Outcome o;
  const std::vector<float> mean{0.5F, -1.0F, 2.0F}, var{4.0F, 0.25F, 1.0F};
  const auto model = hwq::fixtures::bn_passthrough_model(mean, var);
  const auto out = d::synthesize(model, {4, kDistillSteps, 1.0, 0});
  o.check(out.final_loss <= kDistillLossTarget, fmt("final loss %.3g", out.final_loss));
  const auto st = oracle::channel_stats(oracle::from_tensor(out.data));
  double worst = 0.0;
  for (std::size_t c = 0; c < mean.size(); ++c) {
    worst = std::max(worst, std::abs(st.mean[c] - mean[c]));
    worst = std::max(worst, std::abs(st.std[c] - std::sqrt(static_cast<double>(var[c]))));
  }
  o.check(worst <= kDistillStatTolerance, fmt("stat error %.3g", worst));

  const std::vector<std::pair<hwq::ModelGraph, d::DistillConfig>> fixtures{
      {model, {16, 100, 0.5, 1}},
      {hwq::fixtures::tiny_model(0), {16, 100, 0.05, 1}},
      {hwq::fixtures::toy_cnn(0), {32, 200, 10.0, 0}},
      {hwq::fixtures::decorrelation_model(), {4, 50, 1.0, 1}}};
  for (const auto& [m, cfg] : fixtures) {
    const auto r = d::synthesize(m, cfg);
    o.check(r.final_loss <= r.initial_loss, "loss rose on a fixture");
  }
  o.note(fmt("closed-form loss %.2g", out.final_loss) + fmt(", stat error %.2g", worst) +
         ", 4/4 fixtures non-increasing");
  return o;
}

Outcome ac8() {
  Outcome o;
  const std::vector<std::pair<const char*, hwq::ModelGraph>> models{
      {"passthrough", hwq::fixtures::bn_passthrough_model({0.1F, 0.2F, -0.3F},
                                                          {1.0F, 2.0F, 0.5F})},
      {"tiny", hwq::fixtures::tiny_model(0)},
      {"toy_cnn", hwq::fixtures::toy_cnn(0)}};
  double worst = 0.0;
  for (const auto& [name, m] : models) {
    const auto x = oracle::normal_batch(m.input_shape, 2, 0);
    const auto g = hwq::input_gradient(m, x);
    const auto fd = oracle::stat_loss_gradient_fd(m, oracle::from_tensor(x), kFdStep);
    const std::vector<double> analytic(g.gradient.data().begin(), g.gradient.data().end());
    const double err = oracle::max_relative_error(analytic, fd);
    worst = std::max(worst, err);
    o.check(err <= kGradientTolerance, std::string(name) + fmt(" error %.3g", err));
  }
  o.note(fmt("max relative error %.2g", worst));
  return o;
}

struct Run {
  nlohmann::json eval;
  nlohmann::json plan;
  double seconds = 0.0;
};

Run run_pipeline(const fs::path& out, double beta) {
  auto config = pl::load_config(data_dir() / "toy_config.json");
  pl::Overrides ov;
  ov.output_dir = out;
  ov.beta = beta;
  pl::apply(config, ov);
  const auto start = Clock::now();
  pl::run_all(config);
  return {hwq::read_json(out / "eval.json"), hwq::read_json(out / "plan.json"),
          seconds_since(start)};
}

Outcome ac9(const Run& r) {
  Outcome o;
  const auto& e = r.eval;
  const auto mis = [&](const char* v) { return e[v]["misclassified"].get<std::size_t>(); };
  o.check(mis("planned") <= mis("all4") + kMisclassificationSlack,
          "planned misclassifies more than all-4");
  o.check(mis("all8") <= mis("planned") + kMisclassificationSlack,
          "planned beats all-8 by more than one sample");
  o.check(e["planned"]["cycles"].get<std::int64_t>() <= e["all8"]["cycles"].get<std::int64_t>(),
          "planned slower than all-8");
  const auto achieved = r.plan["achieved_bits"].get<std::uint64_t>();
  const auto limit = r.plan["limit_bits"].get<std::uint64_t>();
  o.check(achieved <= limit, "size above limit");
  o.check(e["planned"]["size_bits"].get<std::uint64_t>() == achieved, "size bookkeeping");
  o.check(r.seconds < kEndToEndBudgetS, fmt("took %.1f s", r.seconds));
  o.note(fmt("acc 4/plan/8 = %.3f", e["all4"]["accuracy"].get<double>()) +
         fmt("/%.3f", e["planned"]["accuracy"].get<double>()) +
         fmt("/%.3f", e["all8"]["accuracy"].get<double>()) +
         ", cycles " + std::to_string(e["planned"]["cycles"].get<std::int64_t>()) + " <= " +
         std::to_string(e["all8"]["cycles"].get<std::int64_t>()) + ", size " +
         std::to_string(achieved) + " <= " + std::to_string(limit) + fmt(", %.1f s", r.seconds));
  return o;
}

Outcome ac10() {
  Outcome o;
  const auto model = hwq::fixtures::decorrelation_model();
  const auto q = hwq::quantizable_layers(model);
  const auto p = hwq::hw::profile_model(model, std::vector<int>{4, 8}, {});
  const auto w0 = hwq::weight_count(model.layers[q[0]]);
  const auto w1 = hwq::weight_count(model.layers[q[1]]);
  const auto c0 = p.at(0, 8).cost.total(), c1 = p.at(1, 8).cost.total();
  o.check(w0 < w1 && c0 > c1, "smaller layer is not the slower one");
  o.note(std::to_string(w0) + " weights / " + std::to_string(c0) + " cycles vs " +
         std::to_string(w1) + " weights / " + std::to_string(c1) + " cycles");
  return o;
}

std::string bits_string(const nlohmann::json& bits) {
  std::string s;
  for (const auto& b : bits) s += std::to_string(b.get<int>());
  return s;
}

Outcome ac11(const Run& mqe, const Run& oqa, const Run& both) {
  Outcome o;
  const auto b1 = mqe.plan["weight_bits"], b2 = oqa.plan["weight_bits"],
             b3 = both.plan["weight_bits"];
  o.check(b1 != b2 && b1 != b3 && b2 != b3, "plans are not pairwise distinct");
  const auto acc = [](const Run& r) { return r.eval["planned"]["accuracy"].get<double>(); };
  const auto cyc = [](const Run& r) { return r.eval["planned"]["cycles"].get<std::int64_t>(); };
  for (const Run* other : {&mqe, &oqa}) {
    const bool dominated = acc(*other) >= acc(both) && cyc(*other) <= cyc(both) &&
                           (acc(*other) > acc(both) || cyc(*other) < cyc(both));
    o.check(!dominated, "balanced plan is dominated");
  }
  o.note("beta=1 " + bits_string(b1) + fmt(" (%.3f, ", acc(mqe)) + std::to_string(cyc(mqe)) +
         "), gamma=1 " + bits_string(b2) + fmt(" (%.3f, ", acc(oqa)) +
         std::to_string(cyc(oqa)) + "), balanced " + bits_string(b3) +
         fmt(" (%.3f, ", acc(both)) + std::to_string(cyc(both)) + ")");
  return o;
}

}  // namespace

int main() {
  int failures = 0;
  const auto report = [&](int n, const std::function<Outcome()>& f) {
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::printf("AC%d %s %s\n", n, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  };

  report(1, ac1);
  report(2, ac2);
  report(3, ac3);
  report(4, ac4);
  report(5, ac5);
  report(6, ac6);
  report(7, ac7);
  report(8, ac8);

  test_util::TempDir dir("acceptance");
  std::optional<Run> balanced, mqe_only, oqa_only;
  const auto runs = [&] {
    if (!balanced) {
      balanced = run_pipeline(dir.path() / "balanced", 0.5);
      mqe_only = run_pipeline(dir.path() / "beta1", 1.0);
      oqa_only = run_pipeline(dir.path() / "gamma1", 0.0);
    }
  };
  report(9, [&] { runs(); return ac9(*balanced); });
  report(10, ac10);
  report(11, [&] { runs(); return ac11(*mqe_only, *oqa_only, *balanced); });
  return failures;
}
