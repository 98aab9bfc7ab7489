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

#include <cmath>
#include <cstdint>
#include <vector>

#include <benchmark/benchmark.h>

#include "spkadapt/alignment.hpp"
#include "spkadapt/corpus.hpp"
#include "spkadapt/metrics.hpp"
#include "spkadapt/training.hpp"
#include "spkadapt/variance.hpp"

using namespace spkadapt;

namespace {

const std::vector<Utterance>& utterances() {
  static const std::vector<Utterance> utts = [] {
    const CorpusSpec spec;
    const PhonemeInventory inv = make_inventory(spec, 3);
    const SpeakerLatent spk = make_speaker(spec, "bm", 4);
    const SyntheticSpeakerEmbedder embedder(spec.n_mels, {.dim = spec.embedding_dim});
    Rng rng(5);
    std::vector<Utterance> out;
    for (int i = 0; i < 8; ++i) {
      std::vector<std::int32_t> ph(12);
      for (auto& p : ph) p = static_cast<std::int32_t>(1 + rng.below(spec.vocab_size - 1));
      out.push_back(synthesize_features(spec, inv, spk, ph, rng));
      out.back().embedding = embedder.embed(out.back().mel);
    }
    return out;
  }();
  return utts;
}

TtsModel<float> desk_model(const char* strategy) {
  TtsModel<float> m(ModelConfig::desk(), 1);
  m.stats = compute_variance_stats(utterances());
  const Strategy s = Strategy::parse(strategy);
  if (s.uses_adapters()) m.attach(s, AdapterDims::desk(), 1);
  return m;
}

Tensor<double> log_grid(std::size_t n, std::size_t m) {
  Rng rng(9);
  Tensor<double> lp({n, m});
  for (std::size_t t = 0; t < m; ++t) {
    double z = 0;
    for (std::size_t i = 0; i < n; ++i) z += std::exp(lp(i, t) = rng.normal());
    for (std::size_t i = 0; i < n; ++i) lp(i, t) -= std::log(z);
  }
  return lp;
}

// Forward and backward of the full loss on one batch.
void BM_BatchGradient(benchmark::State& state, const char* strategy) {
  const TtsModel<float> model = desk_model(strategy);
  std::vector<const Utterance*> batch;
  for (const auto& u : utterances()) batch.push_back(&u);
  std::uint64_t step = 0;
  for (auto _ : state) benchmark::DoNotOptimize(batch_gradient(model, batch, LossContext{}, step++));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size()));
}
BENCHMARK_CAPTURE(BM_BatchGradient, ft, "ft")->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_BatchGradient, adapter_evd, "adapter_e/v/d")->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_BatchGradient, hyper_evd, "hyper_e/v/d")->Unit(benchmark::kMillisecond);

void BM_Synthesize(benchmark::State& state) {
  const TtsModel<float> model = desk_model("hyper_e/v/d");
  const Utterance& u = utterances()[0];
  for (auto _ : state) benchmark::DoNotOptimize(synthesize(model, u.phonemes, u.embedding));
}
BENCHMARK(BM_Synthesize)->Unit(benchmark::kMillisecond);

void BM_ForwardSum(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor<double> lp = log_grid(n, 4 * n);
  for (auto _ : state) {
    Graph<double> g;
    const Var<double> loss = forward_sum_loss(g.constant(lp));
    g.backward(loss);
    benchmark::DoNotOptimize(loss.value());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ForwardSum)->RangeMultiplier(2)->Range(16, 256)->Complexity(benchmark::oNSquared);

void BM_Viterbi(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor<double> lp = log_grid(n, 4 * n);
  for (auto _ : state) benchmark::DoNotOptimize(viterbi_path(lp));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Viterbi)->RangeMultiplier(2)->Range(16, 256)->Complexity(benchmark::oNSquared);

void BM_PitchCwt(benchmark::State& state) {
  const PitchCwt cwt(10);
  std::vector<double> contour(static_cast<std::size_t>(state.range(0)));
  for (std::size_t t = 0; t < contour.size(); ++t) contour[t] = std::sin(0.05 * static_cast<double>(t));
  for (auto _ : state) {
    const Tensor<double> spec = cwt.decompose(contour);
    benchmark::DoNotOptimize(cwt.reconstruct(spec));
  }
}
BENCHMARK(BM_PitchCwt)->Arg(100)->Arg(400)->Arg(1600);

void BM_Mcd(benchmark::State& state) {
  Rng rng(12);
  const auto frames = static_cast<std::size_t>(state.range(0));
  Tensor<float> a({frames, 80}), b({frames + frames / 10, 80});
  for (auto& v : a.storage()) v = static_cast<float>(rng.normal());
  for (auto& v : b.storage()) v = static_cast<float>(rng.normal());
  for (auto _ : state) benchmark::DoNotOptimize(mcd_metric(a, b));
}
BENCHMARK(BM_Mcd)->Arg(100)->Arg(400)->Unit(benchmark::kMillisecond);

void BM_GeneratedWeights(benchmark::State& state) {
  const TtsModel<float> model = desk_model("hyper_e/v/d");
  const auto& emb = utterances()[0].embedding;
  for (auto _ : state) benchmark::DoNotOptimize(generated_weights(model, emb));
}
BENCHMARK(BM_GeneratedWeights);

}  // namespace

BENCHMARK_MAIN();
