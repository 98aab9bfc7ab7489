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

#include "spkadapt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "json.hpp"

namespace spkadapt {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

using nlohmann::json;

constexpr char kMagic[4] = {'S', 'P', 'K', 'C'};

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}

  template <typename I>
  void integer(I v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void string(const std::string& s) {
    integer(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void shape(const Shape& s) {
    integer(static_cast<std::uint32_t>(s.size()));
    for (auto d : s) integer(static_cast<std::uint64_t>(d));
  }
  void values(const Tensor<float>& t) {
    out_.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  Reader(std::ifstream& in, const std::filesystem::path& path) : in_(in), path_(path) {}

  void bytes(char* dst, std::size_t n) {
    if (!in_.read(dst, static_cast<std::streamsize>(n))) throw IoError("checkpoint " + path_.string() + ": truncated");
  }
  template <typename I>
  I integer() {
    I v{};
    bytes(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  }
  std::string string() {
    const auto n = integer<std::uint32_t>();
    if (n > (1u << 20)) throw IoError("checkpoint " + path_.string() + ": implausible name length");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  Shape shape() {
    const auto rank = integer<std::uint32_t>();
    if (rank > 4) throw IoError("checkpoint " + path_.string() + ": implausible rank");
    Shape s(rank);
    for (auto& d : s) d = static_cast<std::size_t>(integer<std::uint64_t>());
    return s;
  }
  Tensor<float> values(const Shape& s) {
    Tensor<float> t(s);
    bytes(reinterpret_cast<char*>(t.data().data()), t.size() * sizeof(float));
    return t;
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::ifstream& in_;
  const std::filesystem::path& path_;
};

json stats_json(const VarianceStats& s) {
  return {{"valid", s.valid},
          {"energy_min", s.energy_min},
          {"energy_max", s.energy_max},
          {"log_f0_min", s.log_f0_min},
          {"log_f0_max", s.log_f0_max}};
}

VarianceStats stats_from(const json& j) {
  VarianceStats s;
  s.valid = j.at("valid").get<bool>();
  s.energy_min = j.at("energy_min").get<double>();
  s.energy_max = j.at("energy_max").get<double>();
  s.log_f0_min = j.at("log_f0_min").get<double>();
  s.log_f0_max = j.at("log_f0_max").get<double>();
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // write-then-rename so an interrupted save never leaves a torn checkpoint
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    Writer w(out);
    out.write(kMagic, 4);
    w.integer(kCheckpointVersion);
    const json header = {{"model", json::parse(to_json(ckpt.model.config))},
                         {"adapter", json::parse(to_json(ckpt.model.dims))},
                         {"strategy", ckpt.model.strategy.name()},
                         {"step", ckpt.step},
                         {"stats", stats_json(ckpt.model.stats)}};
    const std::string text = header.dump();
    w.integer(static_cast<std::uint64_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));

    const auto& entries = ckpt.model.params.entries();
    w.integer(static_cast<std::uint64_t>(entries.size()));
    for (const auto& [name, p] : entries) {
      w.string(name);
      w.shape(p->value.shape());
      w.values(p->value);
    }
    w.integer(static_cast<std::uint8_t>(ckpt.optimizer ? 1 : 0));
    if (ckpt.optimizer) {
      const AdamState& s = *ckpt.optimizer;
      w.integer(s.step);
      w.integer(static_cast<std::uint64_t>(s.m.size()));
      for (const auto& [name, m] : s.m) {
        const Tensor<float>& v = s.v.at(name);
        w.string(name);
        w.shape(m.shape());
        w.values(m);
        w.values(v);
      }
    }
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  Reader r(in, path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw IoError("checkpoint " + path.string() + ": bad magic");
  const auto version = r.integer<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint " + path.string() + ": unsupported version " + std::to_string(version));
  }
  const auto header_bytes = r.integer<std::uint64_t>();
  if (header_bytes > (1u << 24)) throw IoError("checkpoint " + path.string() + ": implausible header size");
  std::string text(header_bytes, '\0');
  r.bytes(text.data(), text.size());

  Checkpoint ckpt;
  Strategy strategy;
  try {
    const json header = json::parse(text);
    ckpt.model.config = model_config_from_json(header.at("model").dump());
    ckpt.model.dims = adapter_dims_from_json(header.at("adapter").dump());
    strategy = Strategy::parse(header.at("strategy").get<std::string>());
    ckpt.step = header.at("step").get<std::uint64_t>();
    ckpt.model.stats = stats_from(header.at("stats"));
  } catch (const json::exception& e) {
    throw IoError("checkpoint " + path.string() + ": bad header: " + e.what());
  }

  const auto count = r.integer<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.string();
    const Shape shape = r.shape();
    ckpt.model.params.add(name, r.values(shape));
  }
  if (r.integer<std::uint8_t>() != 0) {
    AdamState s;
    s.step = r.integer<std::uint64_t>();
    const auto n = r.integer<std::uint64_t>();
    for (std::uint64_t i = 0; i < n; ++i) {
      std::string name = r.string();
      const Shape shape = r.shape();
      if (!ckpt.model.params.contains(name) || ckpt.model.params.at(name).value.shape() != shape) {
        throw ConfigError("checkpoint " + path.string() + ": optimizer state for unknown tensor " + name);
      }
      s.m.emplace(name, r.values(shape));
      s.v.emplace(name, r.values(shape));
    }
    ckpt.optimizer = std::move(s);
  }
  if (!r.at_end()) throw IoError("checkpoint " + path.string() + ": trailing bytes");

  // The declared layout must match the stored tensors exactly.
  TtsModel<float> expected(ckpt.model.config, 0);
  if (strategy.uses_adapters()) expected.attach(strategy, ckpt.model.dims, 0);
  const auto& want = expected.params.entries();
  const auto& have = ckpt.model.params.entries();
  if (want.size() != have.size()) {
    throw ConfigError("checkpoint " + path.string() + ": " + std::to_string(have.size()) + " tensors, config implies " +
                      std::to_string(want.size()));
  }
  for (const auto& [name, p] : want) {
    auto it = have.find(name);
    if (it == have.end() || it->second->value.shape() != p->value.shape()) {
      throw ConfigError("checkpoint " + path.string() + ": tensor " + name + " missing or misshapen");
    }
  }
  ckpt.model.set_strategy(strategy, ckpt.model.dims);
  return ckpt;
}

}  // namespace spkadapt
