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

#include "cptk/conformal.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "cptk/error.hpp"
#include "cptk/rng.hpp"
#include "json_util.hpp"

namespace cptk {

namespace {

constexpr std::array<Method, 6> kAllMethods = {
    Method::kNaive, Method::kAps,           Method::kApsRandomized,
    Method::kRaps,  Method::kRapsRandomized, Method::kCpsn};

constexpr double kInf = std::numeric_limits<double>::infinity();

bool UsesRaps(Method m) {
  return m == Method::kRaps || m == Method::kRapsRandomized;
}

}  // namespace

std::string_view MethodName(Method m) {
  switch (m) {
    case Method::kNaive:
      return "naive";
    case Method::kAps:
      return "aps";
    case Method::kApsRandomized:
      return "aps_rand";
    case Method::kRaps:
      return "raps";
    case Method::kRapsRandomized:
      return "raps_rand";
    case Method::kCpsn:
      return "cpsn";
  }
  return "unknown";
}

Method MethodFromName(std::string_view name) {
  for (Method m : kAllMethods) {
    if (MethodName(m) == name) return m;
  }
  throw ValidationError("unknown method '" + std::string(name) +
                        "' (expected naive, aps, aps_rand, raps, raps_rand "
                        "or cpsn)");
}

bool IsRandomized(Method m) {
  return m == Method::kApsRandomized || m == Method::kRapsRandomized;
}

std::span<const Method> AllMethods() { return kAllMethods; }

void ValidateAlpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ValidationError("alpha must be in (0, 1), got " +
                          std::to_string(alpha));
  }
}

std::size_t ConformalRank(std::size_t n, double alpha) {
  ValidateAlpha(alpha);
  // The slack absorbs representation error in products like 100 * 0.9.
  const double level = static_cast<double>(n + 1) * (1.0 - alpha);
  return static_cast<std::size_t>(std::ceil(level - 1e-9));
}

double ConformalQuantile(std::span<const double> scores, double alpha) {
  if (scores.empty()) throw ValidationError("conformal quantile of no scores");
  const std::size_t rank = ConformalRank(scores.size(), alpha);
  for (double s : scores) {
    if (std::isnan(s)) throw ValidationError("conformal score is NaN");
  }
  if (rank > scores.size()) return kInf;
  std::vector<double> work(scores.begin(), scores.end());
  auto nth = work.begin() + static_cast<std::ptrdiff_t>(rank - 1);
  std::nth_element(work.begin(), nth, work.end());
  return *nth;
}

ScoreSpec ScoreSpecFor(Method method, const std::optional<RapsParams>& raps) {
  ScoreSpec spec;
  spec.family = UsesRaps(method) ? ScoreFamily::kRaps : ScoreFamily::kAps;
  spec.randomized = IsRandomized(method);
  if (UsesRaps(method)) {
    if (!raps) {
      throw ValidationError(std::string(MethodName(method)) +
                            " needs RAPS parameters");
    }
    spec.raps = *raps;
  }
  return spec;
}

kernels::SetSpec SetSpecFor(Method method,
                            const std::optional<RapsParams>& raps) {
  kernels::SetSpec spec;
  if (method == Method::kNaive) {
    spec.rule = kernels::SetRule::kMassReaches;
    return spec;
  }
  spec.rule = kernels::SetRule::kScoreAtMost;
  spec.score = ScoreSpecFor(method, raps);
  return spec;
}

double CalibrationDraw(std::uint64_t seed, std::uint64_t ordinal) {
  return UniformAt(DeriveSeed(seed, "calibrate"), ordinal);
}

double PredictionDraw(std::uint64_t seed, std::uint64_t ordinal) {
  return UniformAt(DeriveSeed(seed, "predict"), ordinal);
}

ConformalScoreSet ComputeScores(const LabeledSplit& split, Method method,
                                const std::optional<RapsParams>& raps,
                                std::uint64_t seed) {
  if (method == Method::kNaive || method == Method::kCpsn) {
    throw ValidationError(std::string(MethodName(method)) +
                          " has no single-threshold calibration scores");
  }
  split.Validate();
  if (raps) raps->Validate(split.num_classes());
  const ScoreSpec spec = ScoreSpecFor(method, raps);
  std::vector<double> u;
  if (spec.randomized) {
    u.resize(split.size());
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = CalibrationDraw(seed, i);
  }
  ConformalScoreSet out;
  out.method = method;
  out.raps = UsesRaps(method) ? raps : std::nullopt;
  out.scores.resize(split.size());
  // Labels ranked first are always in the (nonempty) set.
  kernels::serial::ConformalScores(split.probs, split.labels, spec, u, 0.0,
                                   out.scores);
  return out;
}

CalibratedThreshold Calibrate(const LabeledSplit& split, double alpha,
                              Method method,
                              const std::optional<RapsParams>& raps,
                              std::uint64_t seed) {
  ValidateAlpha(alpha);
  if (method == Method::kNaive) return NaiveThreshold(alpha);
  if (split.size() == 0) throw ValidationError("calibration split is empty");
  const ConformalScoreSet scores = ComputeScores(split, method, raps, seed);
  CalibratedThreshold t;
  t.method = method;
  t.alpha = alpha;
  t.q = ConformalQuantile(scores.scores, alpha);
  t.n_cal = split.size();
  t.raps = scores.raps;
  t.randomized = IsRandomized(method);
  t.seed = seed;
  t.num_classes = static_cast<std::uint32_t>(split.num_classes());
  return t;
}

namespace {

void CheckClasses(const CalibratedThreshold& t, std::size_t k) {
  if (t.num_classes != 0 && t.num_classes != k) {
    throw ShapeError("threshold was calibrated for k=" +
                     std::to_string(t.num_classes) + " but sample has k=" +
                     std::to_string(k));
  }
}

}  // namespace

PredictionSet PredictSetWithDraw(const CalibratedThreshold& threshold,
                                 const ProbabilityVector& p, double u) {
  CheckClasses(threshold, p.size());
  if (threshold.method == Method::kNaive) {
    return BuildPredictionSet(p, threshold.q);
  }
  if (threshold.method == Method::kCpsn) {
    throw ValidationError("CPSN prediction needs the cpsn conformalizer");
  }
  const ScoreSpec spec = ScoreSpecFor(threshold.method, threshold.raps);
  return ScoreInverseSet(p, threshold.q, spec, spec.randomized ? u : 1.0);
}

PredictionSet PredictSet(const CalibratedThreshold& threshold,
                         const ProbabilityVector& p, std::uint64_t ordinal) {
  return PredictSetWithDraw(threshold, p,
                            PredictionDraw(threshold.seed, ordinal));
}

kernels::SetStats EvaluateThreshold(const CalibratedThreshold& threshold,
                                    const LabeledSplit& split,
                                    bool use_parallel) {
  if (threshold.method == Method::kCpsn) {
    throw ValidationError("CPSN evaluation needs the cpsn conformalizer");
  }
  if (split.size() > 0) CheckClasses(threshold, split.num_classes());
  const kernels::SetSpec spec = SetSpecFor(threshold.method, threshold.raps);
  std::vector<double> u;
  if (threshold.randomized) {
    u.resize(split.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
      u[i] = PredictionDraw(threshold.seed, i);
    }
  }
  const double q = threshold.q;
  kernels::SetStats stats;
  if (use_parallel) {
    kernels::parallel::EvaluateSets(split.probs, split.labels, spec, {&q, 1}, u,
                                    stats);
  } else {
    kernels::serial::EvaluateSets(split.probs, split.labels, spec, {&q, 1}, u,
                                  stats);
  }
  return stats;
}

RapsGrid DefaultRapsGrid(std::size_t num_classes) {
  RapsGrid grid;
  grid.a = {0.001, 0.01, 0.05, 0.1, 0.5};
  const std::size_t max_b = std::min<std::size_t>(num_classes, 10);
  for (std::uint32_t b = 1; b <= max_b; ++b) grid.b.push_back(b);
  return grid;
}

RapsTuning TuneRapsDetailed(const LabeledSplit& tuning, double alpha,
                            const RapsGrid& grid, std::uint64_t seed) {
  ValidateAlpha(alpha);
  if (tuning.size() < kMinTuningExamples) {
    throw ValidationError("RAPS tuning needs at least " +
                          std::to_string(kMinTuningExamples) +
                          " examples, got " + std::to_string(tuning.size()));
  }
  if (grid.a.empty() || grid.b.empty()) {
    throw ValidationError("RAPS tuning grid is empty");
  }
  tuning.Validate();
  const std::size_t k = tuning.num_classes();

  std::vector<std::size_t> idx(tuning.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(DeriveSeed(seed, "raps-tune"));
  rng.Shuffle(std::span<std::size_t>(idx));
  const std::size_t half = idx.size() / 2;
  const LabeledSplit calib =
      tuning.Subset(std::span<const std::size_t>(idx.data(), half));
  const LabeledSplit held_out = tuning.Subset(
      std::span<const std::size_t>(idx.data() + half, idx.size() - half));

  RapsTuning result;
  bool have_best = false;
  for (double a : grid.a) {
    for (std::uint32_t b : grid.b) {
      const RapsParams params{a, b};
      params.Validate(k);
      const CalibratedThreshold t =
          Calibrate(calib, alpha, Method::kRaps, params, seed);
      const kernels::SetStats stats = EvaluateThreshold(t, held_out);
      double total = 0.0;
      for (std::uint32_t s : stats.sizes) total += s;
      const double avg = total / static_cast<double>(stats.sizes.size());
      result.sizes.push_back(avg);
      const bool better =
          !have_best || avg < result.best_size ||
          (avg == result.best_size &&
           (a < result.best.a || (a == result.best.a && b < result.best.b)));
      if (better) {
        result.best = params;
        result.best_size = avg;
        have_best = true;
      }
    }
  }
  return result;
}

RapsParams TuneRaps(const LabeledSplit& tuning, double alpha,
                    const std::optional<RapsGrid>& grid, std::uint64_t seed) {
  const RapsGrid g = grid ? *grid : DefaultRapsGrid(tuning.num_classes());
  return TuneRapsDetailed(tuning, alpha, g, seed).best;
}

CalibratedThreshold NaiveThreshold(double alpha) {
  ValidateAlpha(alpha);
  CalibratedThreshold t;
  t.method = Method::kNaive;
  t.alpha = alpha;
  t.q = 1.0 - alpha;
  return t;
}

std::string ThresholdToJson(const CalibratedThreshold& t) {
  using json_util::Json;
  Json j;
  j["format"] = "cptk-threshold";
  j["version"] = 1;
  j["method"] = std::string(MethodName(t.method));
  j["alpha"] = t.alpha;
  j["q"] = json_util::Real(t.q);
  j["n_cal"] = t.n_cal;
  if (t.raps) {
    j["raps"] = {{"a", t.raps->a}, {"b", t.raps->b}};
  } else {
    j["raps"] = nullptr;
  }
  j["randomized"] = t.randomized;
  j["seed_scheme"] = "splitmix64-stage-v1";
  j["seed"] = t.seed;
  j["num_classes"] = t.num_classes;
  if (t.temperature) {
    j["temperature"] = *t.temperature;
  } else {
    j["temperature"] = nullptr;
  }
  return j.dump(2);
}

CalibratedThreshold ThresholdFromJson(const std::string& text) {
  try {
    const auto j = json_util::Json::parse(text);
    if (j.at("format") != "cptk-threshold") {
      throw DataError(DataErrorCode::kBadManifest, "not a cptk-threshold document");
    }
    if (j.at("version") != 1) {
      throw DataError(DataErrorCode::kBadVersion,
                      "unsupported threshold version");
    }
    CalibratedThreshold t;
    t.method = MethodFromName(j.at("method").get<std::string>());
    t.alpha = j.at("alpha").get<double>();
    ValidateAlpha(t.alpha);
    t.q = json_util::Real(j.at("q"));
    t.n_cal = j.at("n_cal").get<std::size_t>();
    if (!j.at("raps").is_null()) {
      t.raps = RapsParams{j["raps"].at("a").get<double>(),
                          j["raps"].at("b").get<std::uint32_t>()};
    }
    t.randomized = j.at("randomized").get<bool>();
    t.seed = j.at("seed").get<std::uint64_t>();
    t.num_classes = j.at("num_classes").get<std::uint32_t>();
    if (!j.at("temperature").is_null()) {
      t.temperature = j["temperature"].get<double>();
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(DataErrorCode::kBadManifest,
                    std::string("malformed threshold document: ") + e.what());
  }
}

}  // namespace cptk
