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

#include "hwq/error.hpp"

namespace hwq {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kShapeMismatch: return "shape mismatch";
    case ErrorCode::kNumericFailure: return "numeric failure";
    case ErrorCode::kUnsupported: return "unsupported";
    case ErrorCode::kInfeasible: return "infeasible";
    case ErrorCode::kConfig: return "config error";
    case ErrorCode::kFormat: return "format error";
    case ErrorCode::kIo: return "i/o error";
    case ErrorCode::kMissingArtifact: return "missing artifact";
  }
  return "unknown";
}

namespace {

std::string decorate(ErrorCode code, const std::string& message,
                     std::optional<std::size_t> layer) {
  std::string out(to_string(code));
  if (layer) out += " at layer " + std::to_string(*layer);
  out += ": ";
  out += message;
  return out;
}

}  // namespace

Error::Error(ErrorCode code, const std::string& message,
             std::optional<std::size_t> layer_index)
    : std::runtime_error(decorate(code, message, layer_index)),
      code_(code),
      message_(message),
      layer_(layer_index) {}

}  // namespace hwq
