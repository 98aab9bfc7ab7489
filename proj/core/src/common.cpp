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

#include "spkadapt/errors.hpp"
#include "spkadapt/rng.hpp"
#include "spkadapt/tensor.hpp"

#include <cmath>
#include <numbers>

namespace spkadapt {

std::string_view error_kind_name(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kDimension: return "DimensionError";
    case ErrorKind::kState: return "StateError";
    case ErrorKind::kInput: return "InputError";
    case ErrorKind::kNumerical: return "NumericalError";
    case ErrorKind::kConfig: return "ConfigError";
    case ErrorKind::kLookup: return "LookupError";
    case ErrorKind::kInfeasibleAlignment: return "InfeasibleAlignmentError";
    case ErrorKind::kIo: return "IoError";
    case ErrorKind::kInternal: return "InternalError";
  }
  return "Error";
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

namespace {

// splitmix64 finaliser
std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t Rng::derive(std::uint64_t seed, std::uint64_t tag) { return mix(mix(seed) ^ mix(tag + 1)); }

std::uint64_t Rng::derive(std::uint64_t seed, std::string_view tag) {
  // FNV-1a over the tag
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return derive(seed, h);
}

std::size_t shape_size(const Shape& shape) noexcept {
  if (shape.empty()) return 0;
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace spkadapt
