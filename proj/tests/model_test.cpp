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

#include <cstring>
#include <fstream>
#include <variant>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "hwq/dataset.hpp"
#include "hwq/engine.hpp"
#include "hwq/fixtures.hpp"
#include "hwq/model.hpp"
#include "hwq/model_io.hpp"
#include "support/test_util.hpp"

namespace {

using hwq::ErrorCode;
using nlohmann::json;

std::size_t bit_pattern(float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, sizeof u);
  return u;
}

void expect_same_bits(std::span<const float> a, std::span<const float> b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(bit_pattern(a[i]), bit_pattern(b[i])) << "element " << i;
  }
}

TEST(Model, ToyCnnLayout) {
  const auto model = hwq::fixtures::toy_cnn(0);
  EXPECT_NO_THROW(hwq::validate(model));
  const auto q = hwq::quantizable_layers(model);
  EXPECT_EQ(q, (std::vector<std::size_t>{0, 3, 6, 11, 13}));
  std::vector<std::size_t> counts;
  for (auto i : q) counts.push_back(hwq::weight_count(model.layers[i]));
  EXPECT_EQ(counts, (std::vector<std::size_t>{216, 1152, 2304, 2048, 320}));
  EXPECT_EQ(hwq::batchnorm_layers(model), (std::vector<std::size_t>{1, 4, 7}));
}

TEST(Model, InferShapes) {
  const auto shapes = hwq::infer_shapes(hwq::fixtures::toy_cnn(0));
  ASSERT_EQ(shapes.size(), 14U);
  EXPECT_EQ(shapes[0], (hwq::FeatureShape{8, 12, 12}));
  EXPECT_EQ(shapes[3], (hwq::FeatureShape{16, 6, 6}));
  EXPECT_EQ(shapes[9], (hwq::FeatureShape{16, 6, 6}));
  EXPECT_EQ(shapes[10], (hwq::FeatureShape{16, 2, 2}));
  EXPECT_EQ(shapes[13], (hwq::FeatureShape{10, 1, 1}));
  EXPECT_EQ(hwq::layer_input_shape(hwq::fixtures::toy_cnn(0), 11),
            (hwq::FeatureShape{16, 2, 2}));
}

TEST(Model, Fp32ParamCount) {
  const auto model = hwq::fixtures::tiny_model(0);
  std::size_t total = 0;
  for (const auto& layer : model.layers) total += hwq::fp32_param_count(layer);
  // conv biases 4 + 4, BN 4 x 4 twice, linear bias 5.
  EXPECT_EQ(total, 4U + 4U + 32U + 5U);
}

TEST(ModelValidate, BadResidualSource) {
  auto model = hwq::fixtures::toy_cnn(0);
  std::get<hwq::ResidualAdd>(model.layers[9]).source = 9;
  try {
    hwq::validate(model);
    FAIL() << "expected an error";
  } catch (const hwq::Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
    EXPECT_EQ(e.layer_index(), std::optional<std::size_t>(9));
  }
  std::get<hwq::ResidualAdd>(model.layers[9]).source = 2;  // 8x12x12 vs 16x6x6
  EXPECT_HWQ_ERROR(hwq::validate(model), ErrorCode::kShapeMismatch);
}

TEST(ModelValidate, ClassCount) {
  auto model = hwq::fixtures::tiny_model(0);
  model.class_count = 7;
  EXPECT_HWQ_ERROR(hwq::validate(model), ErrorCode::kShapeMismatch);
}

TEST(ModelValidate, KernelShape) {
  auto model = hwq::fixtures::tiny_model(0);
  std::get<hwq::Conv2d>(model.layers[0]).kernel_h = 5;
  EXPECT_HWQ_ERROR(hwq::validate(model), ErrorCode::kShapeMismatch);
}

TEST(ModelValidate, ChannelMismatchNamesLayer) {
  auto model = hwq::fixtures::tiny_model(0);
  std::get<hwq::Conv2d>(model.layers[0]).in_channels = 3;
  std::get<hwq::Conv2d>(model.layers[0]).weight =
      hwq::Tensor(hwq::Shape{4, 3, 3, 3});
  try {
    hwq::validate(model);
    FAIL() << "expected an error";
  } catch (const hwq::Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
    EXPECT_EQ(e.layer_index(), std::optional<std::size_t>(0));
  }
}

TEST(ModelValidate, NonPositiveVariance) {
  auto model = hwq::fixtures::tiny_model(0);
  std::get<hwq::BatchNorm>(model.layers[1]).running_var[0] = 0.0F;
  EXPECT_HWQ_ERROR(hwq::validate(model), ErrorCode::kInvalidArgument);
}

TEST(ModelValidate, EmptyModel) {
  hwq::ModelGraph model;
  EXPECT_HWQ_ERROR(hwq::validate(model), ErrorCode::kInvalidArgument);
}

TEST(ModelIo, RoundTripIsExact) {
  test_util::TempDir dir("model-io");
  for (const auto& model : {hwq::fixtures::toy_cnn(3), hwq::fixtures::tiny_model(1),
                            hwq::fixtures::decorrelation_model()}) {
    const auto path = dir.path() / "m.json";
    hwq::save_model(model, path);
    EXPECT_TRUE(std::filesystem::exists(dir.path() / "m.bin"));
    const auto loaded = hwq::load_model(path);
    ASSERT_EQ(loaded.layers.size(), model.layers.size());
    EXPECT_EQ(loaded.input_shape, model.input_shape);
    EXPECT_EQ(loaded.class_count, model.class_count);
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
      EXPECT_EQ(hwq::layer_kind_name(loaded.layers[i]),
                hwq::layer_kind_name(model.layers[i]));
      if (const auto* w = hwq::layer_weights(model.layers[i])) {
        expect_same_bits(hwq::layer_weights(loaded.layers[i])->data(), w->data());
      }
    }
    const auto batch = hwq::make_dataset({model.input_shape, model.class_count, 8});
    expect_same_bits(hwq::forward(loaded, batch.images).logits.data(),
                     hwq::forward(model, batch.images).logits.data());
  }
}

class ModelIoErrors : public ::testing::Test {
 protected:
  void SetUp() override {
    hwq::save_model(hwq::fixtures::tiny_model(0), manifest_);
    doc_ = hwq::read_json(manifest_);
  }
  void rewrite() { hwq::write_json(manifest_, doc_); }

  test_util::TempDir dir_{"model-io-err"};
  std::filesystem::path manifest_ = dir_.path() / "tiny.json";
  json doc_;
};

TEST_F(ModelIoErrors, MissingManifest) {
  EXPECT_HWQ_ERROR(hwq::load_model(dir_.path() / "none.json"), ErrorCode::kIo);
}

TEST_F(ModelIoErrors, MalformedJson) {
  hwq::write_text(manifest_, "{\"layers\": [");
  EXPECT_HWQ_ERROR(hwq::load_model(manifest_), ErrorCode::kFormat);
}

TEST_F(ModelIoErrors, MissingField) {
  doc_.erase("layers");
  rewrite();
  EXPECT_HWQ_ERROR(hwq::load_model(manifest_), ErrorCode::kFormat);
}

TEST_F(ModelIoErrors, UnknownLayerKind) {
  doc_["layers"][2]["kind"] = "maxpool";
  rewrite();
  EXPECT_HWQ_ERROR(hwq::load_model(manifest_), ErrorCode::kUnsupported);
}

TEST_F(ModelIoErrors, TruncatedBlob) {
  std::filesystem::resize_file(dir_.path() / "tiny.bin", 40);
  try {
    hwq::load_model(manifest_);
    FAIL() << "expected an error";
  } catch (const hwq::Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFormat);
    EXPECT_NE(std::string(e.what()).find("length mismatch"), std::string::npos);
  }
}

TEST_F(ModelIoErrors, BlobNotMultipleOfFour) {
  std::ofstream(dir_.path() / "tiny.bin", std::ios::app | std::ios::binary) << 'x';
  EXPECT_HWQ_ERROR(hwq::load_model(manifest_), ErrorCode::kFormat);
}

TEST(Blob, LittleEndianLayout) {
  test_util::TempDir dir("blob");
  const auto path = dir.path() / "v.bin";
  hwq::write_f32_blob(path, std::vector<float>{1.0F, -2.0F});
  std::ifstream in(path, std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(bytes, (std::vector<unsigned char>{0x00, 0x00, 0x80, 0x3F,
                                               0x00, 0x00, 0x00, 0xC0}));
  EXPECT_EQ(hwq::read_f32_blob(path), (std::vector<float>{1.0F, -2.0F}));
}

TEST(Dataset, DeterministicAndBalanced) {
  const auto a = hwq::make_dataset(hwq::fixtures::toy_eval_spec());
  const auto b = hwq::make_dataset(hwq::fixtures::toy_eval_spec());
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.labels, b.labels);
  std::vector<int> per_class(10, 0);
  for (int l : a.labels) ++per_class.at(static_cast<std::size_t>(l));
  for (int c : per_class) EXPECT_EQ(c, 20);
  auto other = hwq::fixtures::toy_eval_spec();
  other.sample_seed += 1;
  EXPECT_NE(hwq::make_dataset(other).images, a.images);
}

TEST(Dataset, LabeledSetRoundTrip) {
  test_util::TempDir dir("labeled");
  const auto set = hwq::make_dataset({{2, 4, 4}, 3, 9});
  hwq::save_labeled_set(dir.path() / "s.json", set);
  const auto back = hwq::load_labeled_set(dir.path() / "s.json");
  EXPECT_EQ(back.images, set.images);
  EXPECT_EQ(back.labels, set.labels);
}

TEST(Dataset, AccuracyHelpers) {
  const hwq::Tensor logits({3, 2}, {1, 0, 0, 1, 2, 3});
  const std::vector<int> labels{0, 0, 1};
  EXPECT_EQ(hwq::argmax_rows(logits), (std::vector<std::size_t>{0, 1, 1}));
  EXPECT_DOUBLE_EQ(hwq::top1_accuracy(logits, labels), 2.0 / 3.0);
  const hwq::Tensor other({3, 2}, {1, 0, 1, 0, 2, 3});
  EXPECT_EQ(hwq::disagreements(logits, other), 1U);
}

TEST(Dataset, ToyCnnLearnsTheTask) {
  const auto eval = hwq::make_dataset(hwq::fixtures::toy_eval_spec());
  const auto logits = hwq::forward(hwq::fixtures::toy_cnn(0), eval.images).logits;
  EXPECT_GE(hwq::top1_accuracy(logits, eval.labels), 0.8);
}

}  // namespace
