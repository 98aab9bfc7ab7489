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

#include "spkadapt/corpus.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "spkadapt/audio.hpp"
#include "spkadapt/feature_io.hpp"
#include "spkadapt/speaker_embedding.hpp"

namespace spkadapt {
namespace {

std::vector<double> smooth_profile(std::size_t bins, double amplitude, Rng& rng) {
  std::vector<double> raw(bins);
  for (auto& x : raw) x = rng.normal();
  std::vector<double> out(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    const double left = raw[k == 0 ? 0 : k - 1], right = raw[k + 1 == bins ? k : k + 1];
    out[k] = amplitude * (0.25 * left + 0.5 * raw[k] + 0.25 * right);
  }
  return out;
}

std::string speaker_id(SpeakerSet set, std::size_t index) {
  std::ostringstream os;
  os << (set == SpeakerSet::kPretrain ? "pt" : "ad");
  os.width(2);
  os.fill('0');
  os << index;
  return os.str();
}

SpeakerSet parse_set(const std::string& s) {
  if (s == "pretrain") return SpeakerSet::kPretrain;
  if (s == "adaptation") return SpeakerSet::kAdaptation;
  throw InputError("manifest: unknown speaker set '" + s + "'");
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  throw InputError("manifest: unknown split '" + s + "'");
}

}  // namespace

std::string to_string(SpeakerSet s) { return s == SpeakerSet::kPretrain ? "pretrain" : "adaptation"; }
std::string to_string(Split s) { return s == Split::kTrain ? "train" : "val"; }

void Utterance::validate() const {
  if (mel.rank() != 2 || mel.rows() == 0) throw InputError("utterance " + id + ": empty mel");
  if (f0.size() != mel.rows() || energy.size() != mel.rows()) {
    throw InputError("utterance " + id + ": mel/f0/energy frame counts differ");
  }
  for (float f : f0) {
    if (f != 0.0f && (f < kMinF0 || f > kMaxF0)) throw InputError("utterance " + id + ": f0 outside [50, 600] Hz");
  }
  for (float v : mel.data()) {
    if (!std::isfinite(v)) throw InputError("utterance " + id + ": non-finite mel entry");
  }
  if (!durations.empty()) {
    if (durations.size() != phonemes.size()) throw InputError("utterance " + id + ": duration count != phoneme count");
    std::int64_t total = 0;
    for (auto d : durations) total += d;
    if (static_cast<std::size_t>(total) != mel.rows()) throw InputError("utterance " + id + ": durations do not sum to frames");
  }
}

PhonemeInventory make_inventory(const CorpusSpec& spec, std::uint64_t seed) {
  Rng rng(Rng::derive(seed, "inventory"));
  PhonemeInventory inv;
  for (std::size_t p = 0; p < spec.vocab_size; ++p) {
    inv.base_duration.push_back(2 + static_cast<int>(rng.below(4)));
    inv.templates.push_back(smooth_profile(spec.n_mels, 0.4, rng));
    inv.pitch_offset.push_back(rng.uniform(-3.0, 3.0));
    inv.voiced.push_back(p % 6 != 5);
    inv.energy_factor.push_back(rng.uniform(0.7, 1.3));
  }
  return inv;
}

SpeakerLatent make_speaker(const CorpusSpec& spec, const std::string& id, std::uint64_t seed) {
  Rng rng(Rng::derive(seed, "speaker:" + id));
  SpeakerLatent s;
  s.id = id;
  s.base_pitch = rng.uniform(spec.min_pitch, spec.max_pitch);
  s.rate = rng.uniform(spec.min_rate, spec.max_rate);
  s.energy_gain = rng.uniform(0.7, 1.4);
  s.tilt = rng.uniform(-1.0, 1.0);
  s.timbre = smooth_profile(spec.n_mels, 1.5, rng);
  return s;
}

Utterance synthesize_features(const CorpusSpec& spec, const PhonemeInventory& inv, const SpeakerLatent& speaker,
                              std::vector<std::int32_t> phonemes, Rng& noise_rng) {
  if (phonemes.empty()) throw InputError("synthesize_features: empty phoneme sequence");
  Utterance u;
  u.speaker_id = speaker.id;
  std::size_t frames = 0;
  for (auto p : phonemes) {
    if (p < 0 || static_cast<std::size_t>(p) >= inv.base_duration.size()) throw InputError("synthesize_features: bad phoneme id");
    const auto d = std::max<long>(1, std::lround(inv.base_duration[static_cast<std::size_t>(p)] * speaker.rate));
    u.durations.push_back(static_cast<std::int32_t>(d));
    frames += static_cast<std::size_t>(d);
  }
  const std::size_t bins = spec.n_mels;
  u.mel = Tensor<float>({frames, bins});
  u.f0.resize(frames);
  u.energy.resize(frames);
  std::size_t t = 0;
  for (std::size_t i = 0; i < phonemes.size(); ++i) {
    const auto p = static_cast<std::size_t>(phonemes[i]);
    const auto next = static_cast<std::size_t>(phonemes[i + 1 < phonemes.size() ? i + 1 : i]);
    const double level = std::log(speaker.energy_gain * inv.energy_factor[p]) - 1.0;
    for (std::int32_t j = 0; j < u.durations[i]; ++j, ++t) {
      const double pos = (j + 0.5) / u.durations[i];
      double sq = 0;
      for (std::size_t k = 0; k < bins; ++k) {
        const double tmpl = (1.0 - 0.25 * pos) * inv.templates[p][k] + 0.25 * pos * inv.templates[next][k];
        const double slope = speaker.tilt * (static_cast<double>(k) / static_cast<double>(bins - 1) - 0.5);
        const double v = tmpl + speaker.timbre[k] + slope + level + spec.noise * noise_rng.normal();
        u.mel(t, k) = static_cast<float>(v);
        const double mag = std::exp(static_cast<double>(u.mel(t, k)));
        sq += mag * mag;
      }
      u.energy[t] = static_cast<float>(std::sqrt(sq));
      if (inv.voiced[p]) {
        const double hz = speaker.base_pitch * std::pow(2.0, inv.pitch_offset[p] / 12.0) *
                          (1.0 + 0.03 * std::sin(2.0 * 3.141592653589793 * static_cast<double>(t) / 17.0));
        u.f0[t] = static_cast<float>(std::clamp(hz, kMinF0, kMaxF0));
      } else {
        u.f0[t] = 0.0f;
      }
    }
  }
  u.phonemes = std::move(phonemes);
  return u;
}

CorpusManifest::CorpusManifest(std::filesystem::path root, std::vector<ManifestEntry> entries)
    : root_(std::move(root)), entries_(std::move(entries)) {}

CorpusManifest CorpusManifest::load(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest " + manifest_path.string());
  std::vector<ManifestEntry> entries;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  const auto root = manifest_path.parent_path();
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw InputError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    ManifestEntry e;
    try {
      e.id = j.at("id").get<std::string>();
      e.speaker = j.at("speaker").get<std::string>();
      e.set = parse_set(j.at("set").get<std::string>());
      e.split = parse_split(j.at("split").get<std::string>());
      e.phonemes = j.at("phonemes").get<std::string>();
      e.mel = j.at("mel").get<std::string>();
      e.f0 = j.at("f0").get<std::string>();
      e.energy = j.at("energy").get<std::string>();
      e.durations = j.value("durations", "");
      e.embedding = j.value("embedding", "");
    } catch (const nlohmann::json::exception& ex) {
      throw InputError("manifest line " + std::to_string(line_no) + ": " + ex.what());
    }
    if (!ids.insert(e.id).second) throw InputError("manifest: duplicate utterance id '" + e.id + "'");
    for (const std::string* p : {&e.phonemes, &e.mel, &e.f0, &e.energy, &e.durations, &e.embedding}) {
      if (!p->empty() && !std::filesystem::exists(root / *p)) {
        throw IoError("manifest: " + e.id + " references missing file " + (root / *p).string());
      }
    }
    entries.push_back(std::move(e));
  }
  return CorpusManifest(root, std::move(entries));
}

void CorpusManifest::save(const std::filesystem::path& manifest_path) const {
  if (manifest_path.has_parent_path()) std::filesystem::create_directories(manifest_path.parent_path());
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + manifest_path.string());
  for (const auto& e : entries_) {
    nlohmann::json j{{"id", e.id},         {"speaker", e.speaker}, {"set", to_string(e.set)},
                     {"split", to_string(e.split)}, {"phonemes", e.phonemes}, {"mel", e.mel},
                     {"f0", e.f0},         {"energy", e.energy},   {"durations", e.durations},
                     {"embedding", e.embedding}};
    out << j.dump() << '\n';
  }
}

std::vector<ManifestEntry> CorpusManifest::select(SpeakerSet set, Split split) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries_) {
    if (e.set == set && e.split == split) out.push_back(e);
  }
  return out;
}

std::vector<Utterance> load_utterances(const CorpusManifest& manifest, SpeakerSet set, Split split) {
  std::vector<Utterance> out;
  for (const auto& e : manifest.select(set, split)) out.push_back(manifest.load_utterance(e));
  return out;
}

std::vector<std::string> CorpusManifest::speakers(SpeakerSet set) const {
  std::vector<std::string> out;
  for (const auto& e : entries_) {
    if (e.set == set && std::find(out.begin(), out.end(), e.speaker) == out.end()) out.push_back(e.speaker);
  }
  return out;
}

Utterance CorpusManifest::load_utterance(const ManifestEntry& e) const {
  Utterance u;
  u.id = e.id;
  u.speaker_id = e.speaker;
  u.phonemes = read_phoneme_file(root_ / e.phonemes);
  u.mel = read_feature_file<float>(root_ / e.mel);
  u.f0 = read_feature_file<float>(root_ / e.f0).storage();
  u.energy = read_feature_file<float>(root_ / e.energy).storage();
  if (!e.durations.empty()) u.durations = read_feature_file<std::int32_t>(root_ / e.durations).storage();
  if (!e.embedding.empty()) u.embedding = read_feature_file<float>(root_ / e.embedding).storage();
  u.validate();
  return u;
}

std::vector<std::int32_t> read_phoneme_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open phoneme file " + path.string());
  std::vector<std::int32_t> ids;
  std::string tok;
  while (in >> tok) {
    try {
      std::size_t used = 0;
      const long v = std::stol(tok, &used);
      if (used != tok.size() || v < 0) throw std::invalid_argument(tok);
      ids.push_back(static_cast<std::int32_t>(v));
    } catch (const std::exception&) {
      throw InputError("phoneme file " + path.string() + ": bad token '" + tok + "'");
    }
  }
  return ids;
}

void write_phoneme_file(const std::filesystem::path& path, const std::vector<std::int32_t>& ids) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t i = 0; i < ids.size(); ++i) out << (i ? " " : "") << ids[i];
  out << '\n';
}

CorpusManifest generate_synthetic_corpus(const CorpusSpec& spec, std::uint64_t seed,
                                         const std::filesystem::path& out_dir) {
  if (spec.pretrain_speakers < 2 || spec.adaptation_speakers < 2) {
    throw ConfigError("generate_synthetic_corpus: each speaker set needs at least 2 speakers");
  }
  if (spec.val_utterances_per_speaker >= spec.utterances_per_speaker) {
    throw ConfigError("generate_synthetic_corpus: validation utterances must leave training utterances");
  }
  if (spec.min_phonemes == 0 || spec.max_phonemes < spec.min_phonemes) {
    throw ConfigError("generate_synthetic_corpus: bad phoneme length range");
  }
  if (spec.vocab_size == 0 || spec.n_mels < 2) throw ConfigError("generate_synthetic_corpus: bad vocabulary or mel size");

  const PhonemeInventory inv = make_inventory(spec, seed);
  SyntheticSpeakerEmbedder embedder(spec.n_mels, {.dim = spec.embedding_dim});
  std::vector<ManifestEntry> entries;
  nlohmann::json speakers_json = nlohmann::json::array();

  for (SpeakerSet set : {SpeakerSet::kPretrain, SpeakerSet::kAdaptation}) {
    const std::size_t count = set == SpeakerSet::kPretrain ? spec.pretrain_speakers : spec.adaptation_speakers;
    for (std::size_t s = 0; s < count; ++s) {
      const SpeakerLatent speaker = make_speaker(spec, speaker_id(set, s), seed);
      speakers_json.push_back({{"id", speaker.id},
                               {"set", to_string(set)},
                               {"base_pitch", speaker.base_pitch},
                               {"rate", speaker.rate},
                               {"energy_gain", speaker.energy_gain},
                               {"tilt", speaker.tilt},
                               {"timbre", speaker.timbre}});
      for (std::size_t k = 0; k < spec.utterances_per_speaker; ++k) {
        std::ostringstream id;
        id << speaker.id << '_';
        id.width(3);
        id.fill('0');
        id << k;
        Rng rng(Rng::derive(seed, "utt:" + id.str()));
        const std::size_t len = spec.min_phonemes + rng.below(spec.max_phonemes - spec.min_phonemes + 1);
        std::vector<std::int32_t> phonemes(len);
        for (auto& p : phonemes) p = static_cast<std::int32_t>(rng.below(spec.vocab_size));
        Utterance u = synthesize_features(spec, inv, speaker, std::move(phonemes), rng);
        u.id = id.str();
        u.embedding = embedder.embed(u.mel);

        ManifestEntry e;
        e.id = u.id;
        e.speaker = speaker.id;
        e.set = set;
        e.split = k + spec.val_utterances_per_speaker >= spec.utterances_per_speaker ? Split::kVal : Split::kTrain;
        const std::string base = "feats/" + u.id;
        e.phonemes = base + ".phn";
        e.mel = base + ".mel";
        e.f0 = base + ".f0";
        e.energy = base + ".energy";
        e.durations = base + ".dur";
        e.embedding = base + ".emb";
        write_phoneme_file(out_dir / e.phonemes, u.phonemes);
        write_feature_file(out_dir / e.mel, u.mel);
        write_feature_file(out_dir / e.f0, Tensor<float>({u.f0.size()}, u.f0));
        write_feature_file(out_dir / e.energy, Tensor<float>({u.energy.size()}, u.energy));
        write_feature_file(out_dir / e.durations, Tensor<std::int32_t>({u.durations.size()}, u.durations));
        write_feature_file(out_dir / e.embedding, Tensor<float>({u.embedding.size()}, u.embedding));
        entries.push_back(std::move(e));
      }
    }
  }
  {
    std::ofstream out(out_dir / "speakers.json", std::ios::trunc);
    out << speakers_json.dump(2) << '\n';
  }
  CorpusManifest manifest(out_dir, std::move(entries));
  manifest.save(out_dir / kManifestFileName);
  return manifest;
}

}  // namespace spkadapt
