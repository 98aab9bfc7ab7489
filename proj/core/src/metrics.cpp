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

#include "spkadapt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "json.hpp"

namespace spkadapt {
namespace {

const double kMcdScale = 10.0 / std::numbers::ln10;

double frame_distance(const Tensor<double>& a, std::size_t i, const Tensor<double>& b, std::size_t j) {
  double s = 0;
  for (std::size_t k = 0; k < a.cols(); ++k) {
    const double d = a(i, k) - b(j, k);
    s += d * d;
  }
  return kMcdScale * std::sqrt(2.0 * s);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

MeanWithError mean_with_error(std::span<const double> v) {
  MeanWithError r;
  r.count = v.size();
  if (v.empty()) return r;
  double s = 0;
  for (double x : v) s += x;
  r.mean = s / static_cast<double>(v.size());
  if (v.size() > 1) {
    double sq = 0;
    for (double x : v) sq += (x - r.mean) * (x - r.mean);
    r.stderr_ = std::sqrt(sq / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  }
  return r;
}

CosResult cos_metric(std::span<const std::vector<float>> synth, std::span<const std::vector<float>> ref) {
  if (synth.size() != ref.size()) {
    throw InputError("cos_metric: " + std::to_string(synth.size()) + " synthesized vs " + std::to_string(ref.size()) +
                     " reference embeddings");
  }
  CosResult out;
  std::vector<double> scores;
  for (std::size_t i = 0; i < synth.size(); ++i) {
    if (synth[i].size() != ref[i].size()) throw DimensionError("cos_metric: embedding dimensions differ");
    double na = 0, nb = 0;
    for (std::size_t k = 0; k < synth[i].size(); ++k) {
      na += static_cast<double>(synth[i][k]) * synth[i][k];
      nb += static_cast<double>(ref[i][k]) * ref[i][k];
    }
    if (na == 0 || nb == 0) {
      out.excluded.push_back(i);
      continue;
    }
    scores.push_back(100.0 * cosine_similarity(synth[i], ref[i]));
  }
  out.score = mean_with_error(scores);
  return out;
}

double ffe_metric(std::span<const float> pred, std::span<const float> ref, double threshold) {
  if (pred.size() != ref.size()) {
    throw InputError("ffe_metric: contour lengths differ (" + std::to_string(pred.size()) + " vs " +
                     std::to_string(ref.size()) + ")");
  }
  if (ref.empty()) throw InputError("ffe_metric: empty contours");
  std::size_t errors = 0;
  for (std::size_t t = 0; t < ref.size(); ++t) {
    const bool vp = pred[t] > 0, vr = ref[t] > 0;
    if (vp != vr) {
      ++errors;
    } else if (vr && std::abs(static_cast<double>(pred[t]) - ref[t]) > threshold * ref[t]) {
      ++errors;
    }
  }
  return 100.0 * static_cast<double>(errors) / static_cast<double>(ref.size());
}

Tensor<double> mel_cepstrum(const Tensor<float>& mel, std::size_t count) {
  if (mel.rank() != 2 || mel.rows() == 0) throw InputError("mel_cepstrum: empty mel");
  const std::size_t n = mel.cols();
  if (count == 0 || count >= n) {
    throw ConfigError("mel_cepstrum: need 1 <= coefficients < mel bins (" + std::to_string(n) + ")");
  }
  Tensor<double> out({mel.rows(), count});
  const double norm = std::sqrt(2.0 / static_cast<double>(n));
  for (std::size_t t = 0; t < mel.rows(); ++t) {
    for (std::size_t k = 1; k <= count; ++k) {
      double c = 0;
      for (std::size_t i = 0; i < n; ++i) {
        c += mel(t, i) * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * static_cast<double>(i) + 1.0) /
                                  (2.0 * static_cast<double>(n)));
      }
      out(t, k - 1) = norm * c;
    }
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> dtw_path(const Tensor<double>& cost) {
  const std::size_t a = cost.rows(), b = cost.cols();
  if (a == 0 || b == 0) throw InputError("dtw_path: empty sequence");
  const double inf = std::numeric_limits<double>::infinity();
  Tensor<double> acc({a, b}, inf);
  for (std::size_t i = 0; i < a; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      double best = (i == 0 && j == 0) ? 0.0 : inf;
      if (i > 0 && j > 0) best = std::min(best, acc(i - 1, j - 1));
      if (i > 0) best = std::min(best, acc(i - 1, j));
      if (j > 0) best = std::min(best, acc(i, j - 1));
      acc(i, j) = best + cost(i, j);
    }
  }
  std::vector<std::pair<std::size_t, std::size_t>> path;
  std::size_t i = a - 1, j = b - 1;
  path.emplace_back(i, j);
  while (i > 0 || j > 0) {
    // diagonal first on ties
    if (i > 0 && j > 0 && acc(i - 1, j - 1) <= acc(i - 1, j) && acc(i - 1, j - 1) <= acc(i, j - 1)) {
      --i, --j;
    } else if (i > 0 && (j == 0 || acc(i - 1, j) <= acc(i, j - 1))) {
      --i;
    } else {
      --j;
    }
    path.emplace_back(i, j);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

McdResult mcd_metric(const Tensor<float>& pred, const Tensor<float>& ref, std::size_t coefficients) {
  if (pred.rank() != 2 || ref.rank() != 2 || pred.rows() == 0 || ref.rows() == 0) {
    throw InputError("mcd_metric: empty mel");
  }
  if (pred.cols() != ref.cols()) throw DimensionError("mcd_metric: mel bin counts differ");
  const Tensor<double> cp = mel_cepstrum(pred, coefficients), cr = mel_cepstrum(ref, coefficients);
  Tensor<double> cost({cp.rows(), cr.rows()});
  for (std::size_t i = 0; i < cp.rows(); ++i) {
    for (std::size_t j = 0; j < cr.rows(); ++j) cost(i, j) = frame_distance(cp, i, cr, j);
  }
  McdResult out;
  out.path = dtw_path(cost);
  double s = 0;
  for (auto [i, j] : out.path) s += cost(i, j);
  out.mcd = s / static_cast<double>(out.path.size());
  return out;
}

EvalReport evaluate(const TtsModel<float>& model, std::span<const Utterance> refs, const SyntheticSpeakerEmbedder& embedder,
                    std::size_t trainable, std::size_t coefficients, double ffe_threshold) {
  EvalReport report;
  report.strategy = model.strategy.name();
  report.trainable = trainable;
  const std::size_t backbone = model.backbone_parameter_count();
  report.trainable_percent = backbone == 0 ? 0.0 : 100.0 * static_cast<double>(trainable) / static_cast<double>(backbone);
  std::vector<double> cos, ffe, mcd;
  for (const Utterance& u : refs) {
    EvalRow row;
    row.id = u.id;
    try {
      const Synthesis s = synthesize(model, u.phonemes, u.embedding);
      row.frames = s.mel.rows();
      const std::vector<float> synth_emb = embedder.embed(s.mel);
      const std::vector<float> ref_emb = u.embedding.empty() ? embedder.embed(u.mel) : u.embedding;
      const CosResult c = cos_metric(std::span<const std::vector<float>>(&synth_emb, 1),
                                     std::span<const std::vector<float>>(&ref_emb, 1));
      if (!c.excluded.empty()) throw NumericalError("zero-norm embedding");
      row.cos = c.score.mean;
      const McdResult m = mcd_metric(s.mel, u.mel, coefficients);
      row.mcd = m.mcd;
      std::vector<float> fp, fr;
      for (auto [i, j] : m.path) {
        fp.push_back(s.f0[i]);
        fr.push_back(u.f0[j]);
      }
      row.ffe = ffe_metric(fp, fr, ffe_threshold);
      cos.push_back(row.cos);
      ffe.push_back(row.ffe);
      mcd.push_back(row.mcd);
    } catch (const Error& e) {
      row.error = std::string(error_kind_name(e.kind())) + ": " + e.what();
      ++report.failures;
    }
    report.rows.push_back(std::move(row));
  }
  report.cos = mean_with_error(cos);
  report.ffe = mean_with_error(ffe);
  report.mcd = mean_with_error(mcd);
  return report;
}

std::string report_table(const EvalReport& r) {
  std::string s = "id\tcos\tffe\tmcd\tframes\terror\n";
  for (const auto& row : r.rows) {
    s += row.id + "\t" + fixed(row.cos, 3) + "\t" + fixed(row.ffe, 3) + "\t" + fixed(row.mcd, 3) + "\t" +
         std::to_string(row.frames) + "\t" + row.error + "\n";
  }
  s += "mean\t" + fixed(r.cos.mean, 3) + "\t" + fixed(r.ffe.mean, 3) + "\t" + fixed(r.mcd.mean, 3) + "\t\t\n";
  s += "stderr\t" + fixed(r.cos.stderr_, 3) + "\t" + fixed(r.ffe.stderr_, 3) + "\t" + fixed(r.mcd.stderr_, 3) + "\t\t\n";
  return s;
}

std::string report_json(const EvalReport& r) {
  auto agg = [](const MeanWithError& m) { return nlohmann::json{{"mean", m.mean}, {"stderr", m.stderr_}, {"n", m.count}}; };
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json j{{"id", row.id}, {"cos", row.cos}, {"ffe", row.ffe}, {"mcd", row.mcd}, {"frames", row.frames}};
    if (!row.error.empty()) j["error"] = row.error;
    rows.push_back(std::move(j));
  }
  const nlohmann::json j{{"strategy", r.strategy},
                         {"COS", agg(r.cos)},
                         {"FFE", agg(r.ffe)},
                         {"MCD", agg(r.mcd)},
                         {"params", r.trainable},
                         {"params_percent", r.trainable_percent},
                         {"failures", r.failures},
                         {"rows", rows}};
  return j.dump(2);
}

std::vector<std::pair<std::string, std::vector<float>>> generated_site_weights(
    const TtsModel<float>& model, std::span<const float> speaker_embedding) {
  if (model.strategy.kind != StrategyKind::kHyper) {
    throw ConfigError("generated_weights: model strategy " + model.strategy.name() + " has no hypernetwork");
  }
  Graph<float> g;
  const Var<float> spk = g.constant(Tensor<float>({speaker_embedding.size()},
                                                  std::vector<float>(speaker_embedding.begin(), speaker_embedding.end())));
  std::vector<std::pair<std::string, std::vector<float>>> out;
  for (const auto& [site, w] : build_hooks(g, model.params, model.strategy, model.config, model.dims, spk)) {
    std::vector<float> flat;
    for (const Var<float>* v : {&w.w_down, &w.b_down, &w.w_up, &w.b_up}) {
      const auto& t = v->value();
      flat.insert(flat.end(), t.data().begin(), t.data().end());
    }
    out.emplace_back(site.name(), std::move(flat));
  }
  return out;
}

std::vector<float> generated_weights(const TtsModel<float>& model, std::span<const float> speaker_embedding) {
  std::vector<float> out;
  for (const auto& [name, w] : generated_site_weights(model, speaker_embedding)) out.insert(out.end(), w.begin(), w.end());
  return out;
}

ClusterStats cluster_cosines(std::span<const std::vector<float>> rows, std::span<const std::string> labels) {
  if (rows.size() != labels.size()) throw InputError("cluster_cosines: rows and labels differ in length");
  double within = 0, cross = 0;
  std::size_t nw = 0, nc = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      const double c = cosine_similarity(rows[i], rows[j]);
      if (labels[i] == labels[j]) {
        within += c;
        ++nw;
      } else {
        cross += c;
        ++nc;
      }
    }
  }
  if (nw == 0 || nc == 0) throw InputError("cluster_cosines: need at least two labels with two rows each");
  return {within / static_cast<double>(nw), cross / static_cast<double>(nc)};
}

}  // namespace spkadapt
