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

#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hwq/model.hpp"
#include "hwq/tensor.hpp"

namespace hwq {

// Model files are a JSON manifest plus a sidecar blob of little-endian
// float32 values in declaration order. Parameter references in the manifest
// are {"offset", "count"} in float elements. The blob sits next to the
// manifest with the extension replaced by ".bin".
ModelGraph load_model(const std::filesystem::path& manifest);
void save_model(const ModelGraph& model, const std::filesystem::path& manifest);

nlohmann::json model_to_manifest(const ModelGraph& model,
                                 std::string_view blob_name,
                                 std::vector<float>& blob);
ModelGraph model_from_manifest(const nlohmann::json& manifest,
                               std::span<const float> blob);

std::vector<float> read_f32_blob(const std::filesystem::path& path);
void write_f32_blob(const std::filesystem::path& path,
                    std::span<const float> values);

// A tensor persisted in the same blob format, with a small manifest that
// carries the shape and caller-supplied metadata under "meta".
struct TensorFile {
  Tensor tensor;
  nlohmann::json meta;
};

void save_tensor_file(const std::filesystem::path& manifest,
                      std::string_view format, const Tensor& tensor,
                      const nlohmann::json& meta);
TensorFile load_tensor_file(const std::filesystem::path& manifest,
                            std::string_view format);

nlohmann::json read_json(const std::filesystem::path& path);
// Pretty-printed, trailing newline, stable key order.
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace hwq
