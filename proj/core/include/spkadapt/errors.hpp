// Copyright 2026 The spkadapt Authors
//
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

#include <stdexcept>
#include <string>
#include <string_view>

namespace spkadapt {

/// Machine-readable error classes. The CLI prints the class name verbatim.
enum class ErrorKind {
  kDimension,
  kState,
  kInput,
  kNumerical,
  kConfig,
  kLookup,
  kInfeasibleAlignment,
  kIo,
  kInternal,
};

std::string_view error_kind_name(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define SPKADAPT_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                               \
   public:                                                                  \
    explicit Name(const std::string& message) : Error(Kind, message) {}     \
  };

SPKADAPT_DEFINE_ERROR(DimensionError, ErrorKind::kDimension)
SPKADAPT_DEFINE_ERROR(StateError, ErrorKind::kState)
SPKADAPT_DEFINE_ERROR(InputError, ErrorKind::kInput)
SPKADAPT_DEFINE_ERROR(NumericalError, ErrorKind::kNumerical)
SPKADAPT_DEFINE_ERROR(ConfigError, ErrorKind::kConfig)
SPKADAPT_DEFINE_ERROR(LookupError, ErrorKind::kLookup)
SPKADAPT_DEFINE_ERROR(InfeasibleAlignmentError, ErrorKind::kInfeasibleAlignment)
SPKADAPT_DEFINE_ERROR(IoError, ErrorKind::kIo)
SPKADAPT_DEFINE_ERROR(InternalError, ErrorKind::kInternal)

#undef SPKADAPT_DEFINE_ERROR

}  // namespace spkadapt
