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

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "spkadapt/model.hpp"

namespace spkadapt {

/// First and second Adam moments, keyed by parameter name.
struct AdamState {
  std::uint64_t step = 0;
  std::map<std::string, Tensor<float>> m;
  std::map<std::string, Tensor<float>> v;
};

/// Binary layout, little-endian:
///   "SPKC" u32 version
///   u64 header bytes, header JSON {model, adapter, strategy, step, stats}
///   u64 tensor count, then per tensor: name, u32 rank, u64 dims, f32 values
///   u8 optimizer flag; when set: u64 adam step, u64 count, then per entry
///   name, u32 rank, u64 dims, f32 m values, f32 v values
/// Names are u32 length + bytes. Tensors are written in name order.
struct Checkpoint {
  TtsModel<float> model;
  std::uint64_t step = 0;
  std::optional<AdamState> optimizer;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
/// Restores parameters, stats and strategy flags. Throws IoError on a damaged
/// file and ConfigError when the header does not describe the tensors.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace spkadapt
