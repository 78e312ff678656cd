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

#include "hwq/dataset.hpp"

#include <algorithm>
#include <random>

#include "hwq/error.hpp"
#include "hwq/model_io.hpp"

namespace hwq {

namespace {

constexpr const char* kFormat = "hwq-labeled-set";

// Bilinear sample of a coarse x coarse grid at a fine-grid position.
float upsample(const std::vector<float>& grid, std::size_t coarse,
               std::size_t fine_y, std::size_t fine_x, std::size_t height,
               std::size_t width) {
  const auto coord = [coarse](std::size_t i, std::size_t n) {
    return n <= 1 ? 0.0
                  : static_cast<double>(i) * static_cast<double>(coarse - 1) /
                        static_cast<double>(n - 1);
  };
  const double y = coord(fine_y, height);
  const double x = coord(fine_x, width);
  const auto y0 = std::min(static_cast<std::size_t>(y), coarse - 1);
  const auto x0 = std::min(static_cast<std::size_t>(x), coarse - 1);
  const std::size_t y1 = std::min(y0 + 1, coarse - 1);
  const std::size_t x1 = std::min(x0 + 1, coarse - 1);
  const double fy = y - static_cast<double>(y0);
  const double fx = x - static_cast<double>(x0);
  const auto g = [&](std::size_t r, std::size_t c) {
    return static_cast<double>(grid[r * coarse + c]);
  };
  const double top = g(y0, x0) * (1 - fx) + g(y0, x1) * fx;
  const double bottom = g(y1, x0) * (1 - fx) + g(y1, x1) * fx;
  return static_cast<float>(top * (1 - fy) + bottom * fy);
}

}  // namespace

LabeledSet make_dataset(const DatasetSpec& spec) {
  const FeatureShape& s = spec.shape;
  if (spec.classes == 0 || spec.samples == 0 || spec.coarse == 0 ||
      s.elements() == 0) {
    throw Error(ErrorCode::kInvalidArgument, "dataset extents must be positive");
  }
  std::normal_distribution<float> normal(0.0F, 1.0F);

  std::mt19937_64 proto_rng(spec.prototype_seed);
  std::vector<std::vector<float>> prototypes(spec.classes);
  for (auto& proto : prototypes) {
    proto.reserve(s.elements());
    for (std::size_t c = 0; c < s.channels; ++c) {
      std::vector<float> grid(spec.coarse * spec.coarse);
      for (float& v : grid) v = normal(proto_rng);
      for (std::size_t y = 0; y < s.height; ++y) {
        for (std::size_t x = 0; x < s.width; ++x) {
          proto.push_back(upsample(grid, spec.coarse, y, x, s.height, s.width));
        }
      }
    }
  }

  LabeledSet set;
  set.images = Tensor({spec.samples, s.channels, s.height, s.width});
  set.labels.resize(spec.samples);
  std::mt19937_64 rng(spec.sample_seed);
  const auto noise = static_cast<float>(spec.noise);
  for (std::size_t i = 0; i < spec.samples; ++i) {
    const std::size_t label = i % spec.classes;
    set.labels[i] = static_cast<int>(label);
    for (std::size_t j = 0; j < s.elements(); ++j) {
      set.images[i * s.elements() + j] =
          prototypes[label][j] + noise * normal(rng);
    }
  }
  return set;
}

std::vector<std::size_t> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2 || logits.dim(1) == 0) {
    throw Error(ErrorCode::kShapeMismatch, "logits must be (N, classes)");
  }
  const std::size_t k = logits.dim(1);
  std::vector<std::size_t> out(logits.dim(0));
  for (std::size_t n = 0; n < out.size(); ++n) {
    const auto row = logits.data().subspan(n * k, k);
    out[n] = static_cast<std::size_t>(
        std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

double top1_accuracy(const Tensor& logits, std::span<const int> labels) {
  const auto pred = argmax_rows(logits);
  if (pred.size() != labels.size() || pred.empty()) {
    throw Error(ErrorCode::kShapeMismatch, "label count does not match logits");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    hits += static_cast<int>(pred[i]) == labels[i] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

std::size_t disagreements(const Tensor& a, const Tensor& b) {
  const auto pa = argmax_rows(a);
  const auto pb = argmax_rows(b);
  if (pa.size() != pb.size()) {
    throw Error(ErrorCode::kShapeMismatch, "logit tensors differ in batch size");
  }
  std::size_t n = 0;
  for (std::size_t i = 0; i < pa.size(); ++i) n += pa[i] != pb[i] ? 1 : 0;
  return n;
}

void save_labeled_set(const std::filesystem::path& manifest,
                      const LabeledSet& set) {
  if (set.images.rank() != 4 || set.images.dim(0) != set.labels.size()) {
    throw Error(ErrorCode::kShapeMismatch, "one label per image is required");
  }
  save_tensor_file(manifest, kFormat, set.images, {{"labels", set.labels}});
}

LabeledSet load_labeled_set(const std::filesystem::path& manifest) {
  TensorFile file = load_tensor_file(manifest, kFormat);
  LabeledSet set;
  try {
    set.labels = file.meta.at("labels").get<std::vector<int>>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::kFormat, "labeled set has no valid labels");
  }
  set.images = std::move(file.tensor);
  if (set.images.rank() != 4 || set.images.dim(0) != set.labels.size()) {
    throw Error(ErrorCode::kFormat, "labeled set needs one label per image");
  }
  return set;
}

}  // namespace hwq
