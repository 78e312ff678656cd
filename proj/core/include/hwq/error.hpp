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

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hwq {

enum class ErrorCode {
  kInvalidArgument,
  kShapeMismatch,
  kNumericFailure,
  kUnsupported,
  kInfeasible,
  kConfig,
  kFormat,
  kIo,
  kMissingArtifact,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library. The code drives CLI exit status;
// layer_index is set when the failure can be pinned to one layer.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::size_t> layer_index = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> layer_index() const noexcept { return layer_; }
  // The message without the code and layer prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
  std::optional<std::size_t> layer_;
};

}  // namespace hwq
