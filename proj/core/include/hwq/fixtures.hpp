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
#include <vector>

#include "hwq/dataset.hpp"
#include "hwq/model.hpp"

// Deterministic models and data used by the tests, benchmarks and the
// bundled example. Every ReLU sits right after a BatchNorm.
namespace hwq::fixtures {

// Sets every BatchNorm's running statistics to the batch statistics of its
// input on `data`, in model order. gamma and beta are left alone.
void calibrate_batchnorm(ModelGraph& model, const Tensor& data);

// Train/eval splits of the 10-class task the toy CNN is built for.
DatasetSpec toy_train_spec();
DatasetSpec toy_eval_spec();

// 3x12x12 -> 10 classes; three conv blocks (the third with a residual add),
// average pooling and a two-layer head. Conv weights are He-random, BN
// statistics are measured on the training split, and the last layer is a
// nearest-centroid readout of the hidden features.
ModelGraph toy_cnn(std::uint64_t seed = 0);

// Three weighted layers (conv, strided conv, linear) on a 2x6x6 input with
// random BN parameters; 5 classes.
ModelGraph tiny_model(std::uint64_t seed = 0);

// BatchNorm applied directly to a channels x 2 x 2 input, followed by a
// linear readout to 3 classes. The synthesis loss of this model depends on
// the input batch statistics only.
ModelGraph bn_passthrough_model(const std::vector<float>& mean,
                                const std::vector<float>& var);

// A 3x3 conv with 36 weights over a 1x32x32 input followed by a 640-weight
// linear layer: the smaller layer is far more expensive to run.
ModelGraph decorrelation_model();

}  // namespace hwq::fixtures
