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

#include "spkadapt/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "spkadapt/errors.hpp"

namespace spkadapt {

using nlohmann::json;

namespace {

// Field lists shared by the writer and the strict reader.
template <typename V> void visit(V& v, CorpusSpec& c) {
  v("pretrain_speakers", c.pretrain_speakers);
  v("adaptation_speakers", c.adaptation_speakers);
  v("utterances_per_speaker", c.utterances_per_speaker);
  v("val_utterances_per_speaker", c.val_utterances_per_speaker);
  v("vocab_size", c.vocab_size);
  v("min_phonemes", c.min_phonemes);
  v("max_phonemes", c.max_phonemes);
  v("n_mels", c.n_mels);
  v("embedding_dim", c.embedding_dim);
  v("noise", c.noise);
  v("min_pitch", c.min_pitch);
  v("max_pitch", c.max_pitch);
  v("min_rate", c.min_rate);
  v("max_rate", c.max_rate);
}

template <typename V> void visit(V& v, ModelConfig& c) {
  v("vocab_size", c.vocab_size);
  v("n_mels", c.n_mels);
  v("d_h", c.d_h);
  v("heads", c.heads);
  v("conv_filter", c.conv_filter);
  v("conv_kernel1", c.conv_kernel1);
  v("conv_kernel2", c.conv_kernel2);
  v("encoder_layers", c.encoder_layers);
  v("decoder_layers", c.decoder_layers);
  v("dropout", c.dropout);
  v("speaker_dim", c.speaker_dim);
  v("variance_filter", c.variance_filter);
  v("variance_kernel", c.variance_kernel);
  v("variance_dropout", c.variance_dropout);
  v("cwt_scales", c.cwt_scales);
  v("postnet_layers", c.postnet_layers);
  v("postnet_channels", c.postnet_channels);
  v("postnet_kernel", c.postnet_kernel);
  v("postnet_dropout", c.postnet_dropout);
  v("align_dim", c.align_dim);
  v("align_kernel", c.align_kernel);
  v("align_temperature", c.align_temperature);
  v("prior_width", c.prior_width);
}

template <typename V> void visit(V& v, AdapterDims& c) {
  v("d_r", c.d_r);
  v("d_2", c.d_2);
  v("d_l", c.d_l);
  v("d_s", c.d_s);
  v("gain", c.gain);
  v("init_scale", c.init_scale);
}

template <typename V> void visit(V& v, LossWeights& c) {
  v("mel", c.mel);
  v("postnet_mel", c.postnet_mel);
  v("duration", c.duration);
  v("pitch", c.pitch);
  v("energy", c.energy);
  v("forward_sum", c.forward_sum);
  v("binarization", c.binarization);
}

template <typename V> void visit(V& v, ScheduleConfig& c) {
  v("peak_lr", c.peak_lr);
  v("warmup_steps", c.warmup_steps);
  v("milestones", c.milestones);
  v("anneal_factor", c.anneal_factor);
  v("duration_start_step", c.duration_start_step);
  v("total_steps", c.total_steps);
  v("beta1", c.beta1);
  v("beta2", c.beta2);
  v("epsilon", c.epsilon);
  v("constant", c.constant);
}

template <typename V> void visit(V& v, TrainConfig& c) {
  v("schedule", c.schedule);
  v("batch_size", c.batch_size);
  v("weights", c.weights);
  v("grad_clip", c.grad_clip);
  v("prior_steps", c.prior_steps);
  v("binarization_start", c.binarization_start);
  v("binarization_ramp", c.binarization_ramp);
  v("val_every", c.val_every);
  v("checkpoint_every", c.checkpoint_every);
  v("log_every", c.log_every);
}

template <typename V> void visit(V& v, AdaptConfig& c) {
  v("strategy", c.strategy);
  v("schedule", c.schedule);
  v("steps", c.steps);
  v("batch_size", c.batch_size);
  v("grad_clip", c.grad_clip);
}

template <typename V> void visit(V& v, EvalConfig& c) {
  v("mcd_coefficients", c.mcd_coefficients);
  v("ffe_threshold", c.ffe_threshold);
}

template <typename V> void visit(V& v, RunConfig& c) {
  v("seed", c.seed);
  v("corpus", c.corpus);
  v("model", c.model);
  v("adapter", c.adapter);
  v("train", c.train);
  v("adapt", c.adapt);
  v("eval", c.eval);
  v("corpus_dir", c.corpus_dir);
  v("output_dir", c.output_dir);
}

struct Writer {
  json out = json::object();

  template <typename F>
  void operator()(const char* key, F& field) { out[key] = encode(field); }

  template <typename F>
  static json encode(F& field) {
    if constexpr (std::is_same_v<F, std::filesystem::path>) {
      return field.generic_string();
    } else if constexpr (std::is_arithmetic_v<F> || std::is_same_v<F, std::string> ||
                         std::is_same_v<F, std::vector<std::size_t>>) {
      return field;
    } else {
      Writer w;
      visit(w, field);
      return w.out;
    }
  }
};

struct Reader {
  const json& in;
  std::string path;
  std::set<std::string> seen;

  template <typename F>
  void operator()(const char* key, F& field) {
    seen.insert(key);
    auto it = in.find(key);
    if (it == in.end()) return;  // missing keys keep their defaults
    decode(*it, field, path.empty() ? key : path + "." + key);
  }

  void finish() const {
    for (auto it = in.begin(); it != in.end(); ++it) {
      if (!seen.count(it.key())) {
        throw ConfigError("unknown config key '" + (path.empty() ? it.key() : path + "." + it.key()) + "'");
      }
    }
  }

  template <typename F>
  static void decode(const json& j, F& field, const std::string& where) {
    try {
      if constexpr (std::is_same_v<F, bool>) {
        if (!j.is_boolean()) throw ConfigError("config key '" + where + "' must be a boolean");
        field = j.get<bool>();
      } else if constexpr (std::is_integral_v<F>) {
        if (!j.is_number_integer() || (std::is_unsigned_v<F> && j.is_number_integer() && j.get<long long>() < 0 &&
                                       !j.is_number_unsigned())) {
          throw ConfigError("config key '" + where + "' must be a non-negative integer");
        }
        field = j.get<F>();
      } else if constexpr (std::is_floating_point_v<F>) {
        if (!j.is_number()) throw ConfigError("config key '" + where + "' must be a number");
        field = j.get<F>();
      } else if constexpr (std::is_same_v<F, std::string>) {
        if (!j.is_string()) throw ConfigError("config key '" + where + "' must be a string");
        field = j.get<std::string>();
      } else if constexpr (std::is_same_v<F, std::filesystem::path>) {
        if (!j.is_string()) throw ConfigError("config key '" + where + "' must be a path string");
        field = j.get<std::string>();
      } else if constexpr (std::is_same_v<F, std::vector<std::size_t>>) {
        if (!j.is_array()) throw ConfigError("config key '" + where + "' must be an array");
        field.clear();
        for (const auto& e : j) {
          std::size_t x = 0;
          decode(e, x, where + "[]");
          field.push_back(x);
        }
      } else {
        if (!j.is_object()) throw ConfigError("config key '" + where + "' must be an object");
        Reader r{j, where, {}};
        visit(r, field);
        r.finish();
      }
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + where + "': " + e.what());
    }
  }
};

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string(what) + ": malformed JSON: " + e.what());
  }
}

template <typename C>
C from_json_text(const std::string& text, const char* what) {
  const json j = parse_json(text, what);
  C c;
  Reader::decode(j, c, "");
  return c;
}

template <typename C>
std::string to_json_text(const C& c, int indent) {
  C copy = c;
  return Writer::encode(copy).dump(indent);
}

}  // namespace

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.n_mels = 20;
  c.d_h = 32;
  c.heads = 2;
  c.conv_filter = 16;
  c.conv_kernel1 = 3;
  c.conv_kernel2 = 1;
  c.speaker_dim = 64;
  c.variance_filter = 32;
  c.postnet_channels = 16;
  c.align_dim = 32;
  c.align_temperature = 1.0 / 32;
  c.dropout = 0.1;
  c.variance_dropout = 0.5;
  c.postnet_dropout = 0.5;
  return c;
}

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("model config: " + msg);
  };
  require(vocab_size > 0 && n_mels > 0 && d_h > 0, "vocab_size, n_mels and d_h must be positive");
  require(heads > 0 && d_h % heads == 0, "d_h must be divisible by heads");
  require(conv_filter > 0 && conv_kernel1 > 0 && conv_kernel2 > 0, "conv sizes must be positive");
  require(encoder_layers > 0 && decoder_layers > 0, "layer counts must be positive");
  require(variance_filter == d_h, "variance_filter must equal d_h (adapter sites sit on the predictor output)");
  require(variance_kernel % 2 == 1 && postnet_kernel % 2 == 1 && align_kernel % 2 == 1, "kernels must be odd");
  require(cwt_scales > 0, "cwt_scales must be positive");
  require(postnet_layers >= 2 && postnet_channels > 0, "postnet needs >= 2 layers");
  require(align_dim > 0 && align_temperature > 0, "alignment dims must be positive");
  for (double p : {dropout, variance_dropout, postnet_dropout}) require(p >= 0 && p < 1, "dropout must be in [0, 1)");
}

AdapterDims AdapterDims::desk() {
  AdapterDims d;
  d.d_r = 8;
  d.d_2 = 16;
  d.d_l = 16;
  d.d_s = 8;
  return d;
}

ScheduleConfig ScheduleConfig::scaled(std::size_t divisor) const {
  if (divisor == 0) throw ConfigError("schedule divisor must be positive");
  auto div = [divisor](std::size_t v) { return (v + divisor / 2) / divisor; };
  ScheduleConfig s = *this;
  s.warmup_steps = std::max<std::size_t>(1, div(warmup_steps));
  for (auto& m : s.milestones) m = div(m);
  s.duration_start_step = div(duration_start_step);
  s.total_steps = div(total_steps);
  return s;
}

void ScheduleConfig::validate() const {
  if (!(peak_lr > 0)) throw ConfigError("schedule: peak_lr must be positive");
  if (!(anneal_factor > 0)) throw ConfigError("schedule: anneal_factor must be positive");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && epsilon > 0)) {
    throw ConfigError("schedule: Adam moments must lie in [0, 1) and epsilon > 0");
  }
  if (constant) return;
  for (std::size_t i = 1; i < milestones.size(); ++i) {
    if (milestones[i] <= milestones[i - 1]) throw ConfigError("schedule: milestones must increase");
  }
  if (!milestones.empty() && !(warmup_steps < milestones.front() && milestones.back() < total_steps)) {
    throw ConfigError("schedule: need warmup_steps < first milestone and last milestone < total_steps");
  }
}

TrainConfig TrainConfig::desk() {
  TrainConfig t;
  t.schedule = ScheduleConfig{}.scaled(100);
  t.prior_steps = t.schedule.duration_start_step;
  t.binarization_start = t.schedule.duration_start_step;
  t.binarization_ramp = t.schedule.warmup_steps * 5;
  t.val_every = 500;
  t.checkpoint_every = 1000;
  t.log_every = 10;
  return t;
}

AdaptConfig AdaptConfig::desk() {
  AdaptConfig a;
  a.schedule.constant = true;
  a.schedule.peak_lr = 1e-3;
  a.schedule.warmup_steps = 0;
  a.schedule.milestones.clear();
  a.schedule.duration_start_step = 0;
  a.steps = 500;
  a.schedule.total_steps = a.steps;
  return a;
}

std::string to_json(const RunConfig& config, int indent) { return to_json_text(config, indent); }
RunConfig run_config_from_json(const std::string& text) { return from_json_text<RunConfig>(text, "run config"); }
std::string to_json(const ModelConfig& config) { return to_json_text(config, -1); }
ModelConfig model_config_from_json(const std::string& text) {
  return from_json_text<ModelConfig>(text, "model config");
}
std::string to_json(const AdapterDims& dims) { return to_json_text(dims, -1); }
AdapterDims adapter_dims_from_json(const std::string& text) {
  return from_json_text<AdapterDims>(text, "adapter dims");
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return run_config_from_json(ss.str());
}

RunConfig apply_overrides(const RunConfig& config, const std::vector<std::string>& overrides) {
  json j = json::parse(to_json(config, -1));
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "' is not key=value");
    const std::string key = o.substr(0, eq), raw = o.substr(eq + 1);
    json* node = &j;
    std::size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config key '" + key + "'");
      node = &(*node)[part];
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    json value = json::parse(raw, nullptr, false);
    *node = value.is_discarded() ? json(raw) : value;
  }
  return run_config_from_json(j.dump());
}

std::string config_hash(const RunConfig& config) {
  const std::string text = to_json(config, -1);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace spkadapt
