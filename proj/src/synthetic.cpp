// Copyright 2026 The cptk Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>

#include "cptk/error.hpp"
#include "cptk/eval.hpp"
#include "cptk/rng.hpp"
#include "cptk/tempscale.hpp"

namespace cptk {

namespace {

struct Generator {
  Matrix<double> w;           // k x d
  std::vector<double> g;      // unit vector, d
};

Generator MakeGenerator(const SyntheticTask& task) {
  Rng rng(DeriveSeed(task.seed, "synthetic-params"));
  Generator gen;
  gen.w = Matrix<double>(task.k, task.d);
  const double scale = task.signal / std::sqrt(static_cast<double>(task.d));
  for (double& v : gen.w.data()) v = scale * rng.Normal();
  gen.g.resize(task.d);
  double norm = 0.0;
  for (double& v : gen.g) {
    v = rng.Normal();
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (double& v : gen.g) v /= norm;
  return gen;
}

double NormalCdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

std::string DistortionName(Distortion d) {
  switch (d) {
    case Distortion::kNone:
      return "none";
    case Distortion::kDifficultyBlind:
      return "difficulty-blind";
    case Distortion::kLogitScale:
      return "logit-scale";
  }
  return "unknown";
}

Distortion DistortionFromName(const std::string& name) {
  for (Distortion d : {Distortion::kNone, Distortion::kDifficultyBlind,
                       Distortion::kLogitScale}) {
    if (DistortionName(d) == name) return d;
  }
  throw ValidationError("unknown distortion '" + name +
                        "' (expected none, difficulty-blind or logit-scale)");
}

void SyntheticTask::Validate() const {
  if (k < 2) throw ValidationError("synthetic task needs k >= 2");
  if (d < 1) throw ValidationError("synthetic task needs d >= 1");
  if (!(temperature_low > 0.0 && temperature_low <= temperature_high &&
        std::isfinite(temperature_high))) {
    throw ValidationError("synthetic temperature range must satisfy "
                          "0 < low <= high");
  }
  if (!(signal > 0.0 && std::isfinite(signal))) {
    throw ValidationError("synthetic signal must be positive");
  }
  if (!(logit_scale > 0.0 && std::isfinite(logit_scale))) {
    throw ValidationError("logit scale must be positive");
  }
}

LabeledSplit SyntheticData::ToSplit(double T) const {
  LabeledSplit split;
  split.features = features;
  split.labels = labels;
  split.probs = ApplyTemperature(logits, T);
  return split;
}

SyntheticData GenerateSynthetic(const SyntheticTask& task, std::size_t n) {
  return GenerateSynthetic(task, n, task.seed);
}

SyntheticData GenerateSynthetic(const SyntheticTask& task, std::size_t n,
                                std::uint64_t sample_seed) {
  task.Validate();
  const Generator gen = MakeGenerator(task);
  const std::size_t k = task.k, d = task.d;
  const double log_lo = std::log(task.temperature_low);
  const double log_hi = std::log(task.temperature_high);
  const double tau_mid = std::sqrt(task.temperature_low * task.temperature_high);

  SyntheticData out;
  out.features = Matrix<double>(n, d);
  out.logits = Matrix<double>(n, k);
  out.labels.resize(n);
  out.exact.reserve(n);
  out.temperature.resize(n);

  Rng rng(DeriveSeed(sample_seed, "synthetic-samples"));
  std::vector<double> z(k), p(k);
  for (std::size_t i = 0; i < n; ++i) {
    auto x = out.features.row(i);
    for (double& v : x) v = rng.Normal();
    double gx = 0.0;
    for (std::size_t j = 0; j < d; ++j) gx += gen.g[j] * x[j];
    const double tau =
        task.heteroscedastic
            ? std::exp(log_lo + (log_hi - log_lo) * NormalCdf(gx))
            : tau_mid;
    out.temperature[i] = tau;
    for (std::size_t c = 0; c < k; ++c) {
      const auto w = gen.w.row(c);
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += w[j] * x[j];
      z[c] = s;
    }
    const ProbabilityVector exact = ApplyTemperature(z, tau);
    const double u = rng.Uniform();
    double acc = 0.0;
    ClassIndex y = static_cast<ClassIndex>(k - 1);
    for (std::size_t c = 0; c < k; ++c) {
      acc += exact[c];
      if (u < acc) {
        y = static_cast<ClassIndex>(c);
        break;
      }
    }
    out.labels[i] = y;
    out.exact.push_back(exact);
    auto logits = out.logits.row(i);
    for (std::size_t c = 0; c < k; ++c) {
      switch (task.distortion) {
        case Distortion::kNone:
          logits[c] = z[c] / tau;
          break;
        case Distortion::kDifficultyBlind:
          logits[c] = z[c] / tau_mid;
          break;
        case Distortion::kLogitScale:
          logits[c] = task.logit_scale * z[c] / tau;
          break;
      }
    }
  }
  return out;
}

Dataset SyntheticToDataset(const SyntheticData& data, const std::string& name) {
  Dataset ds;
  const std::size_t n = data.size();
  const std::size_t k = data.logits.cols(), d = data.features.cols();
  ds.manifest.name = name;
  ds.manifest.n = n;
  ds.manifest.k = static_cast<std::uint32_t>(k);
  ds.manifest.d = static_cast<std::uint32_t>(d);
  ds.manifest.scores_kind = ScoresKind::kLogits;
  ds.features = Matrix<float>(n, d);
  ds.scores = Matrix<float>(n, k);
  Matrix<float> cond(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      ds.features(i, j) = static_cast<float>(data.features(i, j));
    }
    for (std::size_t c = 0; c < k; ++c) {
      ds.scores(i, c) = static_cast<float>(data.logits(i, c));
      cond(i, c) = static_cast<float>(data.exact[i][c]);
    }
  }
  ds.conditionals = std::move(cond);
  ds.labels.assign(data.labels.begin(), data.labels.end());
  return ds;
}

}  // namespace cptk
