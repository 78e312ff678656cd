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

#include "hwq/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "hwq/error.hpp"

namespace hwq {

std::size_t element_count(const Shape& shape) {
  if (shape.empty()) return 0;
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape)
    : shape_(std::move(shape)), data_(element_count(shape_), T{}) {}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (element_count(shape_) != data_.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "tensor shape " + shape_string(shape_) + " needs " +
                    std::to_string(element_count(shape_)) + " values, got " +
                    std::to_string(data_.size()));
  }
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const {
  return BasicTensor(std::move(shape), data_);
}

template class BasicTensor<float>;
template class BasicTensor<std::int32_t>;

bool all_finite(std::span<const float> values) {
  return std::all_of(values.begin(), values.end(),
                     [](float v) { return std::isfinite(v); });
}

Tensor slice_batch(const Tensor& batch, std::size_t first, std::size_t count) {
  if (batch.rank() < 1 || first + count > batch.dim(0)) {
    throw Error(ErrorCode::kInvalidArgument, "batch slice out of range");
  }
  const std::size_t per_sample = batch.size() / batch.dim(0);
  Shape shape = batch.shape();
  shape[0] = count;
  auto begin = batch.values().begin() +
               static_cast<std::ptrdiff_t>(first * per_sample);
  return Tensor(shape, std::vector<float>(
                           begin, begin + static_cast<std::ptrdiff_t>(
                                              count * per_sample)));
}

}  // namespace hwq
