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

// Split-conformal calibration with a single global threshold.
//
// A calibrated threshold q produces the set {y : score(x, y) <= q}, with the
// top-ranked class always kept. Labels ranked first are therefore always
// covered, and calibration scores them as 0 so that
//     y in set  <=>  calibration score <= q
// holds for every sample. With exchangeable data this gives
//     1 - alpha <= P(y in set) <= 1 - alpha + 1 / (n + 1)
// for continuous scores.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cptk/core.hpp"
#include "cptk/kernels.hpp"

namespace cptk {

enum class Method { kNaive, kAps, kApsRandomized, kRaps, kRapsRandomized, kCpsn };

std::string_view MethodName(Method m);
/// Accepts the names produced by MethodName ("naive", "aps", "aps_rand",
/// "raps", "raps_rand", "cpsn").
Method MethodFromName(std::string_view name);
bool IsRandomized(Method m);

/// All six methods in report order.
std::span<const Method> AllMethods();

struct ConformalScoreSet {
  std::vector<double> scores;
  Method method = Method::kAps;
  std::optional<RapsParams> raps;
};

struct CalibratedThreshold {
  Method method = Method::kAps;
  double alpha = 0.1;
  double q = 0.0;  // +inf means "always the full set"
  std::size_t n_cal = 0;
  std::optional<RapsParams> raps;
  bool randomized = false;
  std::uint64_t seed = 0;
  std::uint32_t num_classes = 0;  // 0 when any k is accepted (naive)
  std::optional<double> temperature;

  friend bool operator==(const CalibratedThreshold&,
                         const CalibratedThreshold&) = default;
};

/// Throws unless alpha is in (0, 1).
void ValidateAlpha(double alpha);

/// The ceil((n + 1)(1 - alpha))-th smallest score, or +inf when that rank
/// exceeds n.
double ConformalQuantile(std::span<const double> scores, double alpha);

/// Order-statistic rank used by ConformalQuantile (1-based, may exceed n).
std::size_t ConformalRank(std::size_t n, double alpha);

/// The score rule a calibrated method uses.
ScoreSpec ScoreSpecFor(Method method, const std::optional<RapsParams>& raps);
kernels::SetSpec SetSpecFor(Method method, const std::optional<RapsParams>& raps);

/// Per-example calibration scores; the u draw of example i is keyed by
/// (seed, i).
ConformalScoreSet ComputeScores(const LabeledSplit& split, Method method,
                                const std::optional<RapsParams>& raps,
                                std::uint64_t seed);

CalibratedThreshold Calibrate(const LabeledSplit& split, double alpha,
                              Method method,
                              const std::optional<RapsParams>& raps = {},
                              std::uint64_t seed = 0);

/// Uniform draw for test sample `ordinal` under a threshold's seed.
double PredictionDraw(std::uint64_t seed, std::uint64_t ordinal);
double CalibrationDraw(std::uint64_t seed, std::uint64_t ordinal);

/// Set for one sample using an explicit draw u (ignored when deterministic).
PredictionSet PredictSetWithDraw(const CalibratedThreshold& threshold,
                                 const ProbabilityVector& p, double u);

/// Set for test sample `ordinal`, drawing u from the threshold's seed.
PredictionSet PredictSet(const CalibratedThreshold& threshold,
                         const ProbabilityVector& p, std::uint64_t ordinal = 0);

/// Batch evaluation of a calibrated threshold on labelled samples.
kernels::SetStats EvaluateThreshold(const CalibratedThreshold& threshold,
                                    const LabeledSplit& split,
                                    bool use_parallel = false);

struct RapsGrid {
  std::vector<double> a;
  std::vector<std::uint32_t> b;
};

/// a in {0.001, 0.01, 0.05, 0.1, 0.5}, b in 1..min(k, 10).
RapsGrid DefaultRapsGrid(std::size_t num_classes);

struct RapsTuning {
  RapsParams best;
  double best_size = 0.0;
  // Average held-out size of each grid pair, a-major.
  std::vector<double> sizes;
};

/// Grid search: calibrate on the first half of a seeded shuffle, measure
/// average set size on the second half. Ties go to smaller a, then smaller b.
RapsTuning TuneRapsDetailed(const LabeledSplit& tuning, double alpha,
                            const RapsGrid& grid, std::uint64_t seed = 0);
RapsParams TuneRaps(const LabeledSplit& tuning, double alpha,
                    const std::optional<RapsGrid>& grid = {},
                    std::uint64_t seed = 0);

/// Minimum tuning split size.
inline constexpr std::size_t kMinTuningExamples = 20;

/// q = 1 - alpha applied with BuildPredictionSet; no data consulted.
CalibratedThreshold NaiveThreshold(double alpha);

std::string ThresholdToJson(const CalibratedThreshold& threshold);
CalibratedThreshold ThresholdFromJson(const std::string& text);

}  // namespace cptk
