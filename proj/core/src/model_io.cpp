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

#include "hwq/model_io.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>

#include "hwq/error.hpp"

namespace hwq {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kModelFormat = "hwq-model";
constexpr int kVersion = 1;

[[noreturn]] void malformed(const std::string& what) {
  throw Error(ErrorCode::kFormat, "malformed manifest: " + what);
}

json append(std::vector<float>& blob, std::span<const float> values) {
  json ref = {{"offset", blob.size()}, {"count", values.size()}};
  blob.insert(blob.end(), values.begin(), values.end());
  return ref;
}

std::vector<float> take(const json& ref, std::span<const float> blob,
                        std::size_t expected, const std::string& what) {
  if (!ref.is_object() || !ref.contains("offset") || !ref.contains("count")) {
    malformed(what + " needs {offset, count}");
  }
  const auto offset = ref.at("offset").get<std::size_t>();
  const auto count = ref.at("count").get<std::size_t>();
  if (count != expected) {
    throw Error(ErrorCode::kFormat,
                "length mismatch: " + what + " declares " +
                    std::to_string(count) + " values, expected " +
                    std::to_string(expected));
  }
  if (offset > blob.size() || count > blob.size() - offset) {
    throw Error(ErrorCode::kFormat, "length mismatch: " + what +
                                        " runs past the end of the weight blob");
  }
  return {blob.begin() + static_cast<std::ptrdiff_t>(offset),
          blob.begin() + static_cast<std::ptrdiff_t>(offset + count)};
}

std::vector<float> take_optional(const json& layer, const char* key,
                                 std::span<const float> blob,
                                 std::size_t expected) {
  if (!layer.contains(key) || layer.at(key).is_null()) return {};
  return take(layer.at(key), blob, expected, key);
}

fs::path blob_path_for(const fs::path& manifest) {
  fs::path p = manifest;
  p.replace_extension(".bin");
  return p;
}

std::size_t declared_floats(const json& manifest) {
  return manifest.value("blob_floats", std::size_t{0});
}

}  // namespace

nlohmann::json model_to_manifest(const ModelGraph& model,
                                 std::string_view blob_name,
                                 std::vector<float>& blob) {
  json layers = json::array();
  for (const Layer& layer : model.layers) {
    json j;
    j["kind"] = std::string(layer_kind_name(layer));
    if (const auto* c = std::get_if<Conv2d>(&layer)) {
      j["in_channels"] = c->in_channels;
      j["out_channels"] = c->out_channels;
      j["kernel"] = {c->kernel_h, c->kernel_w};
      j["stride"] = c->stride;
      j["padding"] = c->padding;
      j["weight"] = append(blob, c->weight.data());
      if (!c->bias.empty()) j["bias"] = append(blob, c->bias);
    } else if (const auto* b = std::get_if<BatchNorm>(&layer)) {
      j["channels"] = b->channels;
      j["eps"] = b->eps;
      j["running_mean"] = append(blob, b->running_mean);
      j["running_var"] = append(blob, b->running_var);
      j["gamma"] = append(blob, b->gamma);
      j["beta"] = append(blob, b->beta);
    } else if (const auto* p = std::get_if<AvgPool>(&layer)) {
      j["window"] = p->window;
      j["stride"] = p->stride;
    } else if (const auto* l = std::get_if<Linear>(&layer)) {
      j["in_features"] = l->in_features;
      j["out_features"] = l->out_features;
      j["weight"] = append(blob, l->weight.data());
      if (!l->bias.empty()) j["bias"] = append(blob, l->bias);
    } else if (const auto* r = std::get_if<ResidualAdd>(&layer)) {
      j["source"] = r->source;
    }
    layers.push_back(std::move(j));
  }
  return {{"format", kModelFormat},
          {"version", kVersion},
          {"input_shape",
           {model.input_shape.channels, model.input_shape.height,
            model.input_shape.width}},
          {"class_count", model.class_count},
          {"blob", std::string(blob_name)},
          {"blob_floats", blob.size()},
          {"layers", std::move(layers)}};
}

ModelGraph model_from_manifest(const nlohmann::json& manifest,
                               std::span<const float> blob) {
  ModelGraph model;
  try {
    if (manifest.value("format", std::string()) != kModelFormat) {
      malformed("format must be \"hwq-model\"");
    }
    if (manifest.value("version", 0) != kVersion) malformed("unknown version");
    const auto shape = manifest.at("input_shape").get<std::vector<std::size_t>>();
    if (shape.size() != 3) malformed("input_shape must be [C, H, W]");
    model.input_shape = {shape[0], shape[1], shape[2]};
    model.class_count = manifest.at("class_count").get<std::size_t>();
    if (blob.size() != declared_floats(manifest)) {
      throw Error(ErrorCode::kFormat,
                  "length mismatch: weight blob holds " +
                      std::to_string(blob.size()) + " floats, manifest declares " +
                      std::to_string(declared_floats(manifest)));
    }
    const json& layers = manifest.at("layers");
    if (!layers.is_array()) malformed("layers must be an array");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const json& j = layers[i];
      const auto kind = j.at("kind").get<std::string>();
      if (kind == "conv2d") {
        Conv2d c;
        c.in_channels = j.at("in_channels").get<std::size_t>();
        c.out_channels = j.at("out_channels").get<std::size_t>();
        const auto k = j.at("kernel").get<std::vector<std::size_t>>();
        if (k.size() != 2) malformed("conv kernel must be [k_h, k_w]");
        c.kernel_h = k[0];
        c.kernel_w = k[1];
        c.stride = j.value("stride", std::size_t{1});
        c.padding = j.value("padding", std::size_t{0});
        const Shape ws{c.out_channels, c.in_channels, c.kernel_h, c.kernel_w};
        c.weight = Tensor(ws, take(j.at("weight"), blob, element_count(ws),
                                   "conv weight"));
        c.bias = take_optional(j, "bias", blob, c.out_channels);
        model.layers.emplace_back(std::move(c));
      } else if (kind == "batchnorm") {
        BatchNorm b;
        b.channels = j.at("channels").get<std::size_t>();
        b.eps = j.value("eps", 1e-5F);
        b.running_mean = take(j.at("running_mean"), blob, b.channels,
                              "running_mean");
        b.running_var = take(j.at("running_var"), blob, b.channels,
                             "running_var");
        b.gamma = take(j.at("gamma"), blob, b.channels, "gamma");
        b.beta = take(j.at("beta"), blob, b.channels, "beta");
        model.layers.emplace_back(std::move(b));
      } else if (kind == "relu") {
        model.layers.emplace_back(ReLU{});
      } else if (kind == "avgpool") {
        model.layers.emplace_back(AvgPool{j.at("window").get<std::size_t>(),
                                          j.at("stride").get<std::size_t>()});
      } else if (kind == "linear") {
        Linear l;
        l.in_features = j.at("in_features").get<std::size_t>();
        l.out_features = j.at("out_features").get<std::size_t>();
        l.weight = Tensor({l.out_features, l.in_features},
                          take(j.at("weight"), blob,
                               l.out_features * l.in_features, "linear weight"));
        l.bias = take_optional(j, "bias", blob, l.out_features);
        model.layers.emplace_back(std::move(l));
      } else if (kind == "residual_add") {
        model.layers.emplace_back(
            ResidualAdd{j.at("source").get<std::size_t>()});
      } else {
        throw Error(ErrorCode::kUnsupported,
                    "unsupported layer kind \"" + kind + "\"", i);
      }
    }
  } catch (const json::exception& e) {
    malformed(e.what());
  }
  validate(model);
  return model;
}

ModelGraph load_model(const fs::path& manifest_path) {
  const json manifest = read_json(manifest_path);
  if (!manifest.contains("blob") || !manifest.at("blob").is_string()) {
    malformed("missing blob name");
  }
  const fs::path blob_path =
      manifest_path.parent_path() / manifest.at("blob").get<std::string>();
  const std::vector<float> blob = read_f32_blob(blob_path);
  return model_from_manifest(manifest, blob);
}

void save_model(const ModelGraph& model, const fs::path& manifest_path) {
  validate(model);
  const fs::path blob_path = blob_path_for(manifest_path);
  std::vector<float> blob;
  const json manifest =
      model_to_manifest(model, blob_path.filename().string(), blob);
  write_f32_blob(blob_path, blob);
  write_json(manifest_path, manifest);
}

std::vector<float> read_f32_blob(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() % 4 != 0) {
    throw Error(ErrorCode::kFormat, "length mismatch: blob " + path.string() +
                                        " is not a whole number of float32");
  }
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::uint32_t bits = static_cast<std::uint32_t>(bytes[4 * i]) |
                               static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8 |
                               static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16 |
                               static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24;
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

void write_f32_blob(const fs::path& path, std::span<const float> values) {
  std::string bytes(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) {
      bytes[4 * i + static_cast<std::size_t>(b)] =
          static_cast<char>((bits >> (8 * b)) & 0xFFU);
    }
  }
  write_text(path, bytes);
}

void save_tensor_file(const fs::path& manifest, std::string_view format,
                      const Tensor& tensor, const nlohmann::json& meta) {
  const fs::path blob_path = blob_path_for(manifest);
  write_f32_blob(blob_path, tensor.data());
  write_json(manifest, {{"format", std::string(format)},
                        {"version", kVersion},
                        {"shape", tensor.shape()},
                        {"blob", blob_path.filename().string()},
                        {"meta", meta}});
}

TensorFile load_tensor_file(const fs::path& manifest_path,
                            std::string_view format) {
  const json manifest = read_json(manifest_path);
  TensorFile out;
  try {
    if (manifest.value("format", std::string()) != format) {
      malformed("expected format \"" + std::string(format) + "\"");
    }
    const auto shape = manifest.at("shape").get<Shape>();
    auto values = read_f32_blob(manifest_path.parent_path() /
                                manifest.at("blob").get<std::string>());
    if (values.size() != element_count(shape)) {
      throw Error(ErrorCode::kFormat,
                  "length mismatch: blob has " + std::to_string(values.size()) +
                      " floats, shape " + shape_string(shape) + " needs " +
                      std::to_string(element_count(shape)));
    }
    out.tensor = Tensor(shape, std::move(values));
    out.meta = manifest.value("meta", json::object());
  } catch (const json::exception& e) {
    malformed(e.what());
  }
  return out;
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string());
  }
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat,
                "malformed manifest " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& doc) {
  write_text(path, doc.dump(2) + "\n");
}

void write_text(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorCode::kIo, "short write to " + path.string());
}

}  // namespace hwq
