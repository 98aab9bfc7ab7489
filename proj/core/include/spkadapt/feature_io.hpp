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
#include <vector>

#include "spkadapt/tensor.hpp"

namespace spkadapt {

/// Feature files are flat little-endian arrays behind a fixed 16-byte header:
///
///   bytes 0-3   magic "SPKF"
///   bytes 4-5   dtype code (1 = float32, 2 = float64, 3 = int32)
///   bytes 6-7   rank (1 or 2)
///   bytes 8-11  extent of axis 0
///   bytes 12-15 extent of axis 1 (0 when rank is 1)
enum class DType : std::uint16_t { kFloat32 = 1, kFloat64 = 2, kInt32 = 3 };

inline constexpr char kFeatureMagic[4] = {'S', 'P', 'K', 'F'};
inline constexpr std::size_t kFeatureHeaderBytes = 16;

template <typename T>
void write_feature_file(const std::filesystem::path& path, const Tensor<T>& tensor);

/// Reads any stored dtype and converts to T.
template <typename T>
Tensor<T> read_feature_file(const std::filesystem::path& path);

DType read_feature_dtype(const std::filesystem::path& path);

}  // namespace spkadapt
