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

// spkadapt: corpus generation, pretraining, adaptation and evaluation verbs.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "spkadapt/adaptation.hpp"
#include "spkadapt/audio.hpp"
#include "spkadapt/checkpoint.hpp"
#include "spkadapt/config.hpp"
#include "spkadapt/corpus.hpp"
#include "spkadapt/errors.hpp"
#include "spkadapt/feature_io.hpp"
#include "spkadapt/grad_check.hpp"
#include "spkadapt/metrics.hpp"
#include "spkadapt/training.hpp"

namespace fs = std::filesystem;
using namespace spkadapt;

namespace {

constexpr int kExitError = 1;
constexpr int kExitUsage = 2;
constexpr int kExitInternal = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config,
                  "Run config JSON; bare names are looked up in $SPKADAPT_CONFIG_DIR");
  cmd->add_option("--set", args.overrides, "Override a config key, dotted.key=value (repeatable)");
  cmd->add_option("--seed", args.seed, "Override the run seed");
}

fs::path find_config(const std::string& name) {
  const char* dir = std::getenv("SPKADAPT_CONFIG_DIR");
  if (name.empty()) {
    if (dir == nullptr) return {};
    const fs::path p = fs::path(dir) / "desk.json";
    if (!fs::exists(p)) throw UsageError("SPKADAPT_CONFIG_DIR has no desk.json: " + p.string());
    return p;
  }
  if (fs::exists(name)) return name;
  if (dir != nullptr) {
    for (const fs::path p : {fs::path(dir) / name, fs::path(dir) / (name + ".json")}) {
      if (fs::exists(p)) return p;
    }
  }
  throw UsageError("config not found: " + name);
}

// Config errors here are usage errors: nothing has been written yet.
RunConfig resolve_config(const CommonArgs& args, std::vector<std::string> extra = {}) {
  try {
    const fs::path path = find_config(args.config);
    RunConfig cfg = path.empty() ? RunConfig{} : load_run_config(path);
    std::vector<std::string> overrides = args.overrides;
    overrides.insert(overrides.end(), extra.begin(), extra.end());
    if (args.seed) overrides.push_back("seed=" + std::to_string(*args.seed));
    cfg = apply_overrides(cfg, overrides);
    Strategy::parse(cfg.adapt.strategy);
    return cfg;
  } catch (const ConfigError& e) {
    throw UsageError(std::string("ConfigError: ") + e.what());
  } catch (const IoError& e) {
    throw UsageError(std::string("IoError: ") + e.what());
  }
}

std::string fnv_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

// <output_dir>/<verb>-<hash>-s<seed>, keyed on the effective config and
// any input paths; the effective config is echoed into it.
fs::path make_run_dir(const std::string& verb, const RunConfig& cfg, const std::string& inputs = {}) {
  std::string hash = config_hash(cfg);
  if (!inputs.empty()) hash = fnv_hex(hash + "|" + inputs);
  const fs::path dir = cfg.output_dir / (verb + "-" + hash + "-s" + std::to_string(cfg.seed));
  fs::create_directories(dir);
  write_text(dir / "config.json", to_json(cfg) + "\n");
  if (!inputs.empty()) write_text(dir / "inputs.txt", inputs + "\n");
  return dir;
}

CorpusManifest open_corpus(const RunConfig& cfg) {
  const fs::path manifest = cfg.corpus_dir / kManifestFileName;
  if (!fs::exists(manifest)) throw IoError("no corpus at " + cfg.corpus_dir.string() + " (run gen-corpus first)");
  return CorpusManifest::load(manifest);
}

void check_corpus_matches(const RunConfig& cfg) {
  if (cfg.corpus.n_mels != cfg.model.n_mels) throw ConfigError("corpus.n_mels differs from model.n_mels");
  if (cfg.corpus.embedding_dim != cfg.model.speaker_dim) {
    throw ConfigError("corpus.embedding_dim differs from model.speaker_dim");
  }
}

struct SplitName {
  SpeakerSet set;
  Split split;
};

SplitName parse_split(const std::string& name) {
  if (name == "adapt-val") return {SpeakerSet::kAdaptation, Split::kVal};
  if (name == "adapt-train") return {SpeakerSet::kAdaptation, Split::kTrain};
  if (name == "pretrain-val") return {SpeakerSet::kPretrain, Split::kVal};
  if (name == "pretrain-train") return {SpeakerSet::kPretrain, Split::kTrain};
  throw ConfigError("unknown split '" + name + "'");
}

const std::vector<std::string> kSplits{"adapt-val", "adapt-train", "pretrain-val", "pretrain-train"};
const std::vector<std::string> kTableStrategies{"tts0",          "adapter_e",   "adapter_v", "adapter_d",
                                                "adapter_e/d",   "adapter_e/v/d", "hyper_e", "hyper_v",
                                                "hyper_d",       "hyper_e/v/d", "ft"};

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (c == '/') c = '-';
  }
  return s;
}

// ---- verbs ---------------------------------------------------------------

int run_gen_corpus(const CommonArgs& common) {
  const RunConfig cfg = resolve_config(common);
  const fs::path run = make_run_dir("gen-corpus", cfg);
  const CorpusManifest m = generate_synthetic_corpus(cfg.corpus, cfg.seed, cfg.corpus_dir);
  write_text(run / "corpus_path.txt", fs::absolute(cfg.corpus_dir).string() + "\n");
  std::cout << m.entries().size() << " utterances written to " << cfg.corpus_dir.string() << "\n";
  return 0;
}

int run_pretrain(const CommonArgs& common, const std::string& resume_path) {
  const RunConfig cfg = resolve_config(common);
  check_corpus_matches(cfg);
  const fs::path run = make_run_dir("pretrain", cfg, resume_path.empty() ? "" : "resume=" + resume_path);
  if (fs::exists(run / "backbone.ckpt")) {
    std::cout << "up to date: " << (run / "backbone.ckpt").string() << "\n";
    return 0;
  }
  const CorpusManifest m = open_corpus(cfg);
  const auto train = load_utterances(m, SpeakerSet::kPretrain, Split::kTrain);
  const auto val = load_utterances(m, SpeakerSet::kPretrain, Split::kVal);

  std::optional<Checkpoint> resume;
  if (!resume_path.empty()) resume = load_checkpoint(resume_path);

  std::ofstream log(run / "train.tsv");
  std::ofstream val_log(run / "val.tsv");
  log << log_header() << "\n";
  val_log << "step\tloss\n";
  TrainHooks hooks;
  hooks.on_log = [&](const LogRow& row) { log << format_log_row(row) << "\n"; };
  hooks.on_validation = [&](const ValRow& row) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%zu\t%.9g", row.step, row.loss);
    val_log << buf << "\n" << std::flush;
    std::cout << "step " << row.step << " val " << row.loss << std::endl;
  };
  hooks.on_checkpoint = [&](const Checkpoint& c) { save_checkpoint(run / "last.ckpt", c); };

  const PretrainResult r =
      pretrain(cfg.model, cfg.train, cfg.seed, train, val, resume ? &*resume : nullptr, 0, hooks);
  save_checkpoint(run / "backbone.ckpt", r.checkpoint);
  std::cout << (run / "backbone.ckpt").string() << "\n";
  return 0;
}

int run_adapt(const CommonArgs& common, const std::string& backbone_path, const std::string& strategy) {
  std::vector<std::string> extra;
  if (!strategy.empty()) extra.push_back("adapt.strategy=" + strategy);
  const RunConfig cfg = resolve_config(common, extra);
  const Strategy s = Strategy::parse(cfg.adapt.strategy);
  const fs::path run = make_run_dir("adapt-" + sanitize(s.name()), cfg, "backbone=" + backbone_path);
  if (fs::exists(run / "adapted.ckpt")) {
    std::cout << "up to date: " << (run / "adapted.ckpt").string() << "\n";
    return 0;
  }
  const Checkpoint backbone = load_checkpoint(backbone_path);
  const CorpusManifest m = open_corpus(cfg);
  const auto train = load_utterances(m, SpeakerSet::kAdaptation, Split::kTrain);
  const auto val = load_utterances(m, SpeakerSet::kAdaptation, Split::kVal);

  std::ofstream log(run / "train.tsv");
  log << log_header() << "\n";
  TrainHooks hooks;
  hooks.on_log = [&](const LogRow& row) { log << format_log_row(row) << "\n"; };
  const AdaptResult r = adapt(backbone, s, cfg.adapter, cfg.adapt, cfg.train.weights, cfg.seed, train, val, hooks);
  save_checkpoint(run / "adapted.ckpt", r.checkpoint);

  nlohmann::ordered_json summary;
  summary["strategy"] = s.name();
  summary["trainable"] = r.trainable;
  summary["validation_loss"] = r.validation;
  write_text(run / "summary.json", summary.dump(2) + "\n");
  std::printf("%s\ttrainable %zu\tvalidation %.6f\n", s.name().c_str(), r.trainable, r.validation);
  std::cout << (run / "adapted.ckpt").string() << "\n";
  return 0;
}

int run_synthesize(const CommonArgs& common, const std::string& ckpt_path, const std::string& split_name,
                   std::size_t limit, bool waveform, std::size_t gl_iterations) {
  const RunConfig cfg = resolve_config(common);
  const SplitName sp = parse_split(split_name);
  const fs::path run = make_run_dir("synthesize", cfg,
                                    "checkpoint=" + ckpt_path + " split=" + split_name + " limit=" +
                                        std::to_string(limit) + (waveform ? " waveform" : ""));
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const CorpusManifest m = open_corpus(cfg);
  auto refs = load_utterances(m, sp.set, sp.split);
  if (limit > 0 && refs.size() > limit) refs.resize(limit);

  fs::create_directories(run / "mel");
  if (waveform) fs::create_directories(run / "wav");
  StftConfig stft;
  stft.n_mels = ckpt.model.config.n_mels;
  for (const Utterance& u : refs) {
    const Synthesis s = synthesize(ckpt.model, u.phonemes, u.embedding);
    write_feature_file(run / "mel" / (u.id + ".mel"), s.mel);
    write_feature_file(run / "mel" / (u.id + ".f0"), Tensor<float>({s.f0.size()}, s.f0));
    if (waveform) {
      // Phase-reconstructed preview only; no neural vocoder.
      write_wav(run / "wav" / (u.id + ".wav"), griffin_lim(s.mel, stft, gl_iterations), stft.sample_rate);
    }
  }
  std::cout << refs.size() << " utterances written to " << run.string() << "\n";
  return 0;
}

int run_evaluate(const CommonArgs& common, const std::string& ckpt_path, const std::string& split_name) {
  const RunConfig cfg = resolve_config(common);
  const SplitName sp = parse_split(split_name);
  const fs::path run = make_run_dir("evaluate", cfg, "checkpoint=" + ckpt_path + " split=" + split_name);
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const CorpusManifest m = open_corpus(cfg);
  const auto refs = load_utterances(m, sp.set, sp.split);
  const TtsModel<float>& model = ckpt.model;
  const std::size_t trainable =
      count_trainable_params(model.strategy, model.config, model.dims, model.backbone_parameter_count());
  const SyntheticSpeakerEmbedder embedder(model.config.n_mels, {.dim = model.config.speaker_dim});
  const EvalReport report =
      evaluate(model, refs, embedder, trainable, cfg.eval.mcd_coefficients, cfg.eval.ffe_threshold);
  write_text(run / "report.tsv", report_table(report));
  write_text(run / "report.json", report_json(report));
  std::cout << report_table(report);
  return report.failures == 0 ? 0 : kExitError;
}

int run_params(const CommonArgs& common, const std::string& strategy, std::optional<std::size_t> d_s, bool use_config,
               bool table) {
  ModelConfig model;
  AdapterDims dims;
  const RunConfig cfg = resolve_config(common);
  if (use_config) {
    model = cfg.model;
    dims = cfg.adapter;
  }
  if (d_s) dims.d_s = *d_s;
  model.validate();

  std::optional<std::size_t> backbone;
  auto backbone_count = [&] {
    if (!backbone) backbone = TtsModel<float>(model, 0).backbone_parameter_count();
    return *backbone;
  };
  auto count = [&](const std::string& name) {
    const Strategy s = Strategy::parse(name);
    return count_trainable_params(s, model, dims, s.kind == StrategyKind::kFineTune ? backbone_count() : 0);
  };

  if (!table) {
    if (strategy.empty()) throw UsageError("params: --strategy or --table is required");
    try {
      Strategy::parse(strategy);
    } catch (const ConfigError& e) {
      throw UsageError(std::string("ConfigError: ") + e.what());
    }
    std::cout << count(strategy) << "\n";
    return 0;
  }
  const double total = static_cast<double>(backbone_count());
  std::printf("strategy\tparams\tpercent\n");
  for (const auto& name : kTableStrategies) {
    const std::size_t n = count(name);
    std::printf("%s\t%zu\t%.3f\n", Strategy::parse(name).name().c_str(), n, 100.0 * static_cast<double>(n) / total);
  }
  return 0;
}

int run_dump_hyper(const CommonArgs& common, const std::string& ckpt_path, const std::string& split_name,
                   std::size_t per_speaker) {
  const RunConfig cfg = resolve_config(common);
  const SplitName sp = parse_split(split_name);
  const fs::path run = make_run_dir("dump-hyper-params", cfg,
                                    "checkpoint=" + ckpt_path + " split=" + split_name +
                                        " per_speaker=" + std::to_string(per_speaker));
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const CorpusManifest m = open_corpus(cfg);
  const auto refs = load_utterances(m, sp.set, sp.split);

  std::ofstream out(run / "hyper_params.tsv");
  if (!out) throw IoError("cannot write hyper_params.tsv");
  out << "utterance\tspeaker\tsite\tvalues\n";
  std::map<std::string, std::size_t> seen;
  std::size_t rows = 0;
  for (const Utterance& u : refs) {
    if (per_speaker > 0 && seen[u.speaker_id]++ >= per_speaker) continue;
    for (const auto& [site, w] : generated_site_weights(ckpt.model, u.embedding)) {
      out << u.id << '\t' << u.speaker_id << '\t' << site << '\t';
      char buf[32];
      for (std::size_t i = 0; i < w.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.9g", w[i]);
        out << (i ? "," : "") << buf;
      }
      out << '\n';
      ++rows;
    }
  }
  std::cout << rows << " rows written to " << (run / "hyper_params.tsv").string() << "\n";
  return 0;
}

int run_grad_check(const CommonArgs& common, const std::string& strategy, std::size_t instances, std::size_t coords,
                   double eps, double threshold) {
  std::vector<std::string> extra;
  if (!strategy.empty()) extra.push_back("adapt.strategy=" + strategy);
  const RunConfig cfg = resolve_config(common, extra);
  check_corpus_matches(cfg);
  const Strategy s = Strategy::parse(cfg.adapt.strategy);

  // A handful of in-memory utterances; nothing touches disk.
  const PhonemeInventory inventory = make_inventory(cfg.corpus, cfg.seed);
  const SpeakerLatent speaker = make_speaker(cfg.corpus, "gc", cfg.seed + 1);
  Rng rng(cfg.seed);
  std::vector<Utterance> utts;
  for (std::size_t i = 0; i < instances; ++i) {
    std::vector<std::int32_t> ph(cfg.corpus.min_phonemes + i % 3);
    for (auto& p : ph) p = static_cast<std::int32_t>(1 + rng.below(cfg.corpus.vocab_size - 1));
    utts.push_back(synthesize_features(cfg.corpus, inventory, speaker, ph, rng));
    utts.back().embedding.resize(cfg.model.speaker_dim);
    for (float& v : utts.back().embedding) v = static_cast<float>(rng.normal(0.0, 0.3));
  }

  TtsModel<double> model(cfg.model, cfg.seed);
  model.stats = compute_variance_stats(utts);
  if (s.uses_adapters()) model.attach(s, cfg.adapter, cfg.seed);
  if (s.kind == StrategyKind::kTts0) model.params.set_all_trainable(false);

  LossContext ctx;
  ctx.prior_strength = 0.5;
  bool ok = true;
  for (std::size_t i = 0; i < instances; ++i) {
    const auto report = grad_check_parameters(
        [&](Graph<double>& g) { return compute_losses(g, model, utts[i], ctx).total; }, model.params,
        {.eps = eps, .threshold = threshold, .max_coords_per_tensor = coords, .seed = cfg.seed + i, .kink_retries = 3});
    std::printf("instance %zu\tchecked %zu\tmax_rel %.3e\tmean_rel %.3e\t%s\t%s\n", i, report.checked,
                report.max_rel_error, report.mean_rel_error, report.passed ? "ok" : "FAIL",
                report.worst_location.c_str());
    ok = ok && report.passed;
  }
  return ok ? 0 : kExitError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speaker adaptation experiments for a non-autoregressive TTS backbone."};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every verb");

  CommonArgs common;
  std::string ckpt, backbone, strategy, resume, split = "adapt-val";
  std::size_t limit = 0, per_speaker = 0, instances = 5, coords = 2, gl_iterations = 32;
  std::optional<std::size_t> d_s;
  bool waveform = false, use_config = false, table = false;
  double eps = 1e-4, threshold = 1e-4;

  auto* gen = app.add_subcommand("gen-corpus", "Generate the synthetic corpus into corpus_dir");
  add_common(gen, common);

  auto* pre = app.add_subcommand("pretrain", "Pretrain the backbone on the pretraining speakers");
  add_common(pre, common);
  pre->add_option("--resume", resume, "Resume from a checkpoint with optimizer state")->check(CLI::ExistingFile);

  auto* ad = app.add_subcommand("adapt", "Adapt a pretrained backbone to the adaptation speakers");
  add_common(ad, common);
  ad->add_option("--backbone", backbone, "Pretrained backbone checkpoint")->required()->check(CLI::ExistingFile);
  ad->add_option("--strategy", strategy, "Shorthand for --set adapt.strategy=NAME (tts0, ft, adapter_*, hyper_*)");

  auto* syn = app.add_subcommand("synthesize", "Write predicted mel and F0 feature files");
  add_common(syn, common);
  syn->add_option("--checkpoint", ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  syn->add_option("--split", split, "Reference utterances for text and speaker embedding")
      ->check(CLI::IsMember(kSplits));
  syn->add_option("--limit", limit, "Synthesize at most N utterances (0 = all)");
  syn->add_flag("--waveform", waveform, "Also write a Griffin-Lim reconstruction (not a vocoder)");
  syn->add_option("--gl-iterations", gl_iterations, "Griffin-Lim iterations");

  auto* ev = app.add_subcommand("evaluate", "Score a checkpoint with COS, FFE and MCD");
  add_common(ev, common);
  ev->add_option("--checkpoint", ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--split", split, "Reference utterances")->check(CLI::IsMember(kSplits));

  auto* par = app.add_subcommand("params", "Count trainable parameters (full-size dims unless --from-config)");
  add_common(par, common);
  par->add_option("--strategy", strategy, "Strategy name");
  par->add_option("--d-s", d_s, "Hypernetwork sampler size");
  par->add_flag("--from-config", use_config, "Take model and adapter dims from the run config");
  par->add_flag("--table", table, "Print every strategy with its share of the backbone");

  auto* dump = app.add_subcommand("dump-hyper-params", "Export generated adapter weights per embedding and site");
  add_common(dump, common);
  dump->add_option("--checkpoint", ckpt, "Hypernetwork checkpoint")->required()->check(CLI::ExistingFile);
  dump->add_option("--split", split, "Utterances whose embeddings condition the hypernetwork")
      ->check(CLI::IsMember(kSplits));
  dump->add_option("--per-speaker", per_speaker, "At most N embeddings per speaker (0 = all)");

  auto* gc = app.add_subcommand("grad-check", "Finite-difference check of the full model in double precision");
  add_common(gc, common);
  gc->add_option("--strategy", strategy, "Shorthand for --set adapt.strategy=NAME");
  gc->add_option("--instances", instances, "Random utterances to check");
  gc->add_option("--coords", coords, "Coordinates sampled per tensor (0 = all)");
  gc->add_option("--eps", eps, "Central-difference step");
  gc->add_option("--threshold", threshold, "Maximum relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: UsageError: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return run_gen_corpus(common);
    if (pre->parsed()) return run_pretrain(common, resume);
    if (ad->parsed()) return run_adapt(common, backbone, strategy);
    if (syn->parsed()) return run_synthesize(common, ckpt, split, limit, waveform, gl_iterations);
    if (ev->parsed()) return run_evaluate(common, ckpt, split);
    if (par->parsed()) return run_params(common, strategy, d_s, use_config, table);
    if (dump->parsed()) return run_dump_hyper(common, ckpt, split, per_speaker);
    if (gc->parsed()) return run_grad_check(common, strategy, instances, coords, eps, threshold);
  } catch (const UsageError& e) {
    std::cerr << "error: UsageError: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << error_kind_name(e.kind()) << ": " << e.what() << "\n";
    return e.kind() == ErrorKind::kInternal ? kExitInternal : kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: Error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitUsage;
}
