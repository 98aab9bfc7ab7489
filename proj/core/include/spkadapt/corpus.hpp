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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "spkadapt/rng.hpp"
#include "spkadapt/tensor.hpp"

namespace spkadapt {

/// Desk-scale corpus description. Features are generated directly in feature
/// space from an explicit rule, so ground-truth durations are known.
struct CorpusSpec {
  std::size_t pretrain_speakers = 8;
  std::size_t adaptation_speakers = 4;
  std::size_t utterances_per_speaker = 50;
  std::size_t val_utterances_per_speaker = 10;
  std::size_t vocab_size = 24;
  std::size_t min_phonemes = 8;
  std::size_t max_phonemes = 16;
  std::size_t n_mels = 20;
  std::size_t embedding_dim = 64;
  double noise = 0.05;
  double min_pitch = 90.0;
  double max_pitch = 260.0;
  double min_rate = 0.8;
  double max_rate = 1.5;
};

struct SpeakerLatent {
  std::string id;
  double base_pitch = 150.0;  // Hz
  double rate = 1.0;          // duration multiplier
  double energy_gain = 1.0;
  double tilt = 0.0;          // log-magnitude slope across mel bins
  std::vector<double> timbre;  // per-bin log-magnitude offset
};

struct PhonemeInventory {
  std::vector<int> base_duration;             // frames at rate 1
  std::vector<std::vector<double>> templates;  // per-bin log-magnitude
  std::vector<double> pitch_offset;           // semitones
  std::vector<bool> voiced;
  std::vector<double> energy_factor;
};

struct Utterance {
  std::string id;
  std::string speaker_id;
  std::vector<std::int32_t> phonemes;
  Tensor<float> mel;  // [frames, n_mels]
  std::vector<float> f0;
  std::vector<float> energy;
  std::vector<std::int32_t> durations;  // ground truth when known
  std::vector<float> embedding;

  std::size_t frames() const { return mel.rows(); }
  /// Throws InputError when the per-frame streams disagree or f0 leaves [50, 600].
  void validate() const;
};

PhonemeInventory make_inventory(const CorpusSpec& spec, std::uint64_t seed);
SpeakerLatent make_speaker(const CorpusSpec& spec, const std::string& id, std::uint64_t seed);

/// Deterministic feature rule; `noise_rng` supplies the additive mel noise.
Utterance synthesize_features(const CorpusSpec& spec, const PhonemeInventory& inventory, const SpeakerLatent& speaker,
                              std::vector<std::int32_t> phonemes, Rng& noise_rng);

enum class SpeakerSet { kPretrain, kAdaptation };
enum class Split { kTrain, kVal };

std::string to_string(SpeakerSet s);
std::string to_string(Split s);

/// One manifest line. Paths are relative to the manifest directory.
struct ManifestEntry {
  std::string id;
  std::string speaker;
  SpeakerSet set = SpeakerSet::kPretrain;
  Split split = Split::kTrain;
  std::string phonemes;
  std::string mel;
  std::string f0;
  std::string energy;
  std::string durations;  // optional
  std::string embedding;  // optional
};

/// Line-delimited JSON, one object per utterance with keys
/// id, speaker, set, split, phonemes, mel, f0, energy, durations, embedding.
class CorpusManifest {
 public:
  CorpusManifest() = default;
  CorpusManifest(std::filesystem::path root, std::vector<ManifestEntry> entries);

  /// Validates unique ids and that every referenced path exists.
  static CorpusManifest load(const std::filesystem::path& manifest_path);
  void save(const std::filesystem::path& manifest_path) const;

  const std::filesystem::path& root() const noexcept { return root_; }
  const std::vector<ManifestEntry>& entries() const noexcept { return entries_; }
  std::vector<ManifestEntry> select(SpeakerSet set, Split split) const;
  std::vector<std::string> speakers(SpeakerSet set) const;

  Utterance load_utterance(const ManifestEntry& entry) const;

 private:
  std::filesystem::path root_;
  std::vector<ManifestEntry> entries_;
};

/// Loads every utterance of one speaker set and split, in manifest order.
std::vector<Utterance> load_utterances(const CorpusManifest& manifest, SpeakerSet set, Split split);

inline constexpr const char* kManifestFileName = "manifest.jsonl";

/// Writes manifest.jsonl, speakers.json and feats/ under `out_dir`.
CorpusManifest generate_synthetic_corpus(const CorpusSpec& spec, std::uint64_t seed,
                                         const std::filesystem::path& out_dir);

std::vector<std::int32_t> read_phoneme_file(const std::filesystem::path& path);
void write_phoneme_file(const std::filesystem::path& path, const std::vector<std::int32_t>& ids);

}  // namespace spkadapt
