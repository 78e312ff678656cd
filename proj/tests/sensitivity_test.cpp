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

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "hwq/distill.hpp"
#include "hwq/fixtures.hpp"
#include "hwq/quant.hpp"
#include "hwq/sensitivity.hpp"
#include "support/oracle.hpp"
#include "support/test_util.hpp"

namespace {

namespace s = hwq::sensitivity;
namespace q = hwq::quant;
using hwq::ErrorCode;

TEST(Mask, CountAndDistinct) {
  for (std::size_t n : {1U, 7U, 10U, 216U, 2304U}) {
    for (double alpha : {0.0, 0.05, 0.25, 0.5, 1.0}) {
      const auto pos = s::mask_positions(n, {alpha, 3, 1});
      EXPECT_EQ(pos.size(), static_cast<std::size_t>(std::llround(alpha * n)));
      const std::set<std::size_t> unique(pos.begin(), pos.end());
      EXPECT_EQ(unique.size(), pos.size());
      for (auto p : pos) EXPECT_LT(p, n);
    }
  }
  EXPECT_EQ(s::mask_positions(5, {0.5, 0, 0}).size(), 3U);  // 2.5 rounds up
}

TEST(Mask, SeedsAndLayersDecorrelate) {
  const auto a = s::mask_positions(1000, {0.5, 1, 0});
  EXPECT_EQ(a, s::mask_positions(1000, {0.5, 1, 0}));
  EXPECT_NE(a, s::mask_positions(1000, {0.5, 2, 0}));
  EXPECT_NE(a, s::mask_positions(1000, {0.5, 1, 1}));
  EXPECT_NE(s::layer_subseed(0, 0), s::layer_subseed(0, 1));
}

TEST(Mask, ZeroesOnlyChosenPositions) {
  hwq::IntTensor w({10}, std::vector<std::int32_t>(10, 5));
  const s::MaskSpec spec{0.3, 4, 2};
  const auto masked = s::mask_weights(w, spec);
  const auto pos = s::mask_positions(10, spec);
  for (std::size_t i = 0; i < 10; ++i) {
    const bool chosen = std::find(pos.begin(), pos.end(), i) != pos.end();
    EXPECT_EQ(masked[i], chosen ? 0 : 5);
  }
  EXPECT_HWQ_ERROR(s::mask_positions(4, {1.5, 0, 0}), ErrorCode::kInvalidArgument);
}

TEST(Kl, Examples) {
  const std::vector<double> p{0.5, 0.5};
  const std::vector<double> u{0.25, 0.75};
  EXPECT_NEAR(s::kl_divergence(p, u), 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0),
              1e-15);
  EXPECT_EQ(s::kl_divergence(p, p), 0.0);
  // q = 0 where p > 0 stays finite through the 1e-12 floor.
  const std::vector<double> one{1.0, 0.0};
  const std::vector<double> other{0.0, 1.0};
  EXPECT_NEAR(s::kl_divergence(one, other), -std::log(1e-12 / (1.0 + 1e-12)), 1e-9);
}

TEST(Kl, RejectsNonDistributions) {
  const std::vector<double> p{0.5, 0.5};
  EXPECT_HWQ_ERROR(s::kl_divergence(p, std::vector<double>{0.5, 0.6}),
                   ErrorCode::kInvalidArgument);
  EXPECT_HWQ_ERROR(s::kl_divergence(p, std::vector<double>{1.5, -0.5}),
                   ErrorCode::kInvalidArgument);
  EXPECT_HWQ_ERROR(s::kl_divergence(p, std::vector<double>{1.0}),
                   ErrorCode::kInvalidArgument);
}

TEST(Kl, MeanOutputKl) {
  const hwq::Tensor a({2, 3}, {0, 1, 2, 3, 3, 3});
  const hwq::Tensor b({2, 3}, {2, 1, 0, 3, 3, 3});
  oracle::Map ma{2, 3, 1, 1, {0, 1, 2, 3, 3, 3}};
  oracle::Map mb{2, 3, 1, 1, {2, 1, 0, 3, 3, 3}};
  const double want = 0.5 * oracle::kl(oracle::softmax_row(ma, 0), oracle::softmax_row(mb, 0));
  EXPECT_NEAR(s::mean_output_kl(a, b), want, 1e-14);
  EXPECT_HWQ_ERROR(s::mean_output_kl(a, hwq::Tensor({3, 2})), ErrorCode::kShapeMismatch);
}

TEST(Method, Parse) {
  EXPECT_EQ(s::parse_method("mqe"), s::Method::kMqe);
  EXPECT_EQ(s::parse_method("naive"), s::Method::kNaive);
  EXPECT_HWQ_ERROR(s::parse_method("oqa"), ErrorCode::kConfig);
}

class MqeTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    tiny_ = new hwq::ModelGraph(hwq::fixtures::tiny_model(0));
    batch_ = new hwq::Tensor(hwq::distill::synthesize(*tiny_, {16, 50, 0.05, 0}).data);
  }
  static void TearDownTestSuite() {
    delete tiny_;
    delete batch_;
  }
  static hwq::ModelGraph* tiny_;
  static hwq::Tensor* batch_;
};

hwq::ModelGraph* MqeTest::tiny_ = nullptr;
hwq::Tensor* MqeTest::batch_ = nullptr;

// Double-precision replay: 8-bit model, one layer masked, KL of the outputs.
TEST_F(MqeTest, MatchesScriptedOracle) {
  const double alpha = 0.5;
  const std::uint64_t seed = 11;
  const auto report = s::mqe_sensitivity(*tiny_, *batch_, alpha, seed);
  const auto base = q::quantize_model(*tiny_, q::BitConfig::uniform(3, 8), *batch_);
  const auto idx = hwq::quantizable_layers(*tiny_);

  std::vector<hwq::Tensor> dq(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) dq[i] = base.layer(i).weight_dq;
  auto run = [&](const std::vector<hwq::Tensor>& w) {
    std::vector<const hwq::Tensor*> ptrs(tiny_->layers.size(), nullptr);
    std::vector<const q::QuantParams*> acts(tiny_->layers.size(), nullptr);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      ptrs[idx[i]] = &w[i];
      acts[idx[i]] = &*base.layer(i).activation_params;
    }
    return oracle::forward(*tiny_, oracle::from_tensor(*batch_), ptrs,
                           [&](std::size_t li, oracle::Map& x) {
                             for (double& v : x.v) {
                               v = static_cast<float>(q::dequantize_value(
                                   q::quantize_value(static_cast<float>(v), *acts[li]),
                                   *acts[li]));
                             }
                           })
        .logits;
  };
  const oracle::Map ref = run(dq);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto w = dq;
    const auto& lq = base.layer(i);
    for (std::size_t p : s::mask_positions(lq.weight_q.size(), {alpha, seed, i})) {
      w[i][p] = 0.0F;
    }
    const oracle::Map out = run(w);
    double kl = 0.0;
    for (std::size_t n = 0; n < ref.n; ++n) {
      kl += oracle::kl(oracle::softmax_row(ref, n), oracle::softmax_row(out, n));
    }
    kl /= static_cast<double>(ref.n);
    EXPECT_NEAR(report.omega[i], kl, 1e-6 + 1e-4 * kl) << "layer " << i;
  }
}

TEST_F(MqeTest, AlphaZeroGivesZeros) {
  const auto r = s::mqe_sensitivity(*tiny_, *batch_, 0.0, 0);
  for (double w : r.omega) EXPECT_EQ(w, 0.0);
}

TEST_F(MqeTest, NonNegativeAndGrowsWithAlpha) {
  double prev_total = 0.0;
  for (double alpha : {0.1, 0.5, 1.0}) {
    const auto r = s::mqe_sensitivity(*tiny_, *batch_, alpha, 1);
    double total = 0.0;
    for (double w : r.omega) {
      EXPECT_GE(w, 0.0);
      total += w;
    }
    EXPECT_GT(total, prev_total);
    prev_total = total;
  }
}

TEST_F(MqeTest, BitwiseReproducible) {
  const auto a = s::mqe_sensitivity(*tiny_, *batch_, 0.5, 7);
  const auto b = s::mqe_sensitivity(*tiny_, *batch_, 0.5, 7);
  ASSERT_EQ(a.omega.size(), b.omega.size());
  for (std::size_t i = 0; i < a.omega.size(); ++i) {
    EXPECT_EQ(std::memcmp(&a.omega[i], &b.omega[i], sizeof(double)), 0);
  }
}

TEST_F(MqeTest, CostCounters) {
  const auto mqe = s::mqe_sensitivity(*tiny_, *batch_, 0.5, 0);
  EXPECT_EQ(mqe.quantizations, 1U);
  EXPECT_EQ(mqe.mask_passes, 3U);
  EXPECT_EQ(mqe.forward_passes, 4U);
  const auto naive = s::naive_sensitivity(*tiny_, *batch_, 4);
  EXPECT_EQ(naive.quantizations, 3U);
  EXPECT_EQ(naive.mask_passes, 0U);
  EXPECT_EQ(naive.forward_passes, 4U);
}

TEST_F(MqeTest, NaiveAtFullPrecisionIsZero) {
  const auto r = s::naive_sensitivity(*tiny_, *batch_, 32);
  for (double w : r.omega) EXPECT_EQ(w, 0.0);
  EXPECT_HWQ_ERROR(s::naive_sensitivity(*tiny_, *batch_, 16), ErrorCode::kInvalidArgument);
}

// Informational: how well the two estimators agree on the toy CNN.
TEST(Sensitivity, RankCorrelationOnToyCnn) {
  const auto model = hwq::fixtures::toy_cnn(0);
  const auto batch = hwq::distill::synthesize(model, {32, 100, 10.0, 0}).data;
  const auto mqe = s::mqe_sensitivity(model, batch, 0.5, 0);
  const auto naive = s::naive_sensitivity(model, batch, 4);
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size(); ++i) r[order[i]] = static_cast<double>(i);
    return r;
  };
  const auto ra = ranks(mqe.omega);
  const auto rb = ranks(naive.omega);
  double d2 = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
  const double n = static_cast<double>(ra.size());
  const double rho = 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
  ::testing::Test::RecordProperty("spearman", std::to_string(rho));
  std::printf("spearman(mqe, naive-4) = %.3f\n", rho);
  EXPECT_GE(rho, -1.0);
}

}  // namespace
