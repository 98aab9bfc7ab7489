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

#include "spkadapt/feature_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace spkadapt {
namespace {

static_assert(std::endian::native == std::endian::little, "feature files assume a little-endian host");

template <typename T>
constexpr DType dtype_of() {
  if constexpr (std::is_same_v<T, float>) return DType::kFloat32;
  else if constexpr (std::is_same_v<T, double>) return DType::kFloat64;
  else if constexpr (std::is_same_v<T, std::int32_t>) return DType::kInt32;
}

struct Header {
  DType dtype;
  Shape shape;
};

Header read_header(std::ifstream& in, const std::filesystem::path& path) {
  std::array<char, kFeatureHeaderBytes> buf{};
  if (!in.read(buf.data(), buf.size())) throw IoError("feature file " + path.string() + ": truncated header");
  if (std::memcmp(buf.data(), kFeatureMagic, 4) != 0) throw IoError("feature file " + path.string() + ": bad magic");
  std::uint16_t dtype = 0, rank = 0;
  std::uint32_t e0 = 0, e1 = 0;
  std::memcpy(&dtype, buf.data() + 4, 2);
  std::memcpy(&rank, buf.data() + 6, 2);
  std::memcpy(&e0, buf.data() + 8, 4);
  std::memcpy(&e1, buf.data() + 12, 4);
  if (dtype < 1 || dtype > 3) throw IoError("feature file " + path.string() + ": unknown dtype code");
  if (rank != 1 && rank != 2) throw IoError("feature file " + path.string() + ": unsupported rank");
  Header h{static_cast<DType>(dtype), rank == 1 ? Shape{e0} : Shape{e0, e1}};
  return h;
}

template <typename Stored, typename T>
void read_values(std::ifstream& in, std::vector<T>& out, const std::filesystem::path& path) {
  std::vector<Stored> raw(out.size());
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(Stored)))) {
    throw IoError("feature file " + path.string() + ": truncated payload");
  }
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = static_cast<T>(raw[i]);
}

}  // namespace

template <typename T>
void write_feature_file(const std::filesystem::path& path, const Tensor<T>& tensor) {
  if (tensor.rank() != 1 && tensor.rank() != 2) {
    throw DimensionError("write_feature_file: rank must be 1 or 2, got " + shape_string(tensor.shape()));
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  std::array<char, kFeatureHeaderBytes> buf{};
  std::memcpy(buf.data(), kFeatureMagic, 4);
  const auto dtype = static_cast<std::uint16_t>(dtype_of<T>());
  const auto rank = static_cast<std::uint16_t>(tensor.rank());
  const auto e0 = static_cast<std::uint32_t>(tensor.dim(0));
  const auto e1 = static_cast<std::uint32_t>(tensor.rank() == 2 ? tensor.dim(1) : 0);
  std::memcpy(buf.data() + 4, &dtype, 2);
  std::memcpy(buf.data() + 6, &rank, 2);
  std::memcpy(buf.data() + 8, &e0, 4);
  std::memcpy(buf.data() + 12, &e1, 4);
  out.write(buf.data(), buf.size());
  out.write(reinterpret_cast<const char*>(tensor.data().data()), static_cast<std::streamsize>(tensor.size() * sizeof(T)));
  if (!out) throw IoError("write failed for " + path.string());
}

template <typename T>
Tensor<T> read_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature file " + path.string());
  const Header h = read_header(in, path);
  std::vector<T> values(shape_size(h.shape));
  switch (h.dtype) {
    case DType::kFloat32: read_values<float>(in, values, path); break;
    case DType::kFloat64: read_values<double>(in, values, path); break;
    case DType::kInt32: read_values<std::int32_t>(in, values, path); break;
  }
  return Tensor<T>(h.shape, std::move(values));
}

DType read_feature_dtype(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature file " + path.string());
  return read_header(in, path).dtype;
}

template void write_feature_file(const std::filesystem::path&, const Tensor<float>&);
template void write_feature_file(const std::filesystem::path&, const Tensor<double>&);
template void write_feature_file(const std::filesystem::path&, const Tensor<std::int32_t>&);
template Tensor<float> read_feature_file(const std::filesystem::path&);
template Tensor<double> read_feature_file(const std::filesystem::path&);
template Tensor<std::int32_t> read_feature_file(const std::filesystem::path&);

}  // namespace spkadapt
