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

// Metrics, a synthetic task with known conditionals, and the repeated-split
// experiment runner.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cptk/conformal.hpp"
#include "cptk/core.hpp"
#include "cptk/cpsn.hpp"
#include "cptk/dataio.hpp"
#include "cptk/kernels.hpp"
#include "cptk/regressor.hpp"

namespace cptk {

// --- Metrics ----------------------------------------------------------------

double Coverage(std::span<const PredictionSet> sets,
                std::span<const ClassIndex> labels);
double AvgSize(std::span<const PredictionSet> sets);

double Coverage(const kernels::SetStats& stats);
double AvgSize(const kernels::SetStats& stats);

// --- Synthetic task ---------------------------------------------------------

/// What the emitted "classifier" outputs look like relative to the truth.
enum class Distortion {
  kNone,             // exact conditionals
  kDifficultyBlind,  // ignores the per-sample temperature field
  kLogitScale,       // exact logits multiplied by logit_scale
};

std::string DistortionName(Distortion d);
Distortion DistortionFromName(const std::string& name);

/// x ~ N(0, I_d). Base logits z = W x with W fixed by `seed`. The true
/// conditional is softmax(z / tau(x)) where, when heteroscedastic,
///     tau(x) = exp(log lo + (log hi - log lo) * Phi(g . x))
/// for a fixed unit vector g, so tau is log-uniform on [lo, hi]. Otherwise
/// tau = sqrt(lo * hi) everywhere.
struct SyntheticTask {
  std::uint32_t k = 11;
  std::uint32_t d = 64;
  bool heteroscedastic = true;
  double temperature_low = 0.5;
  double temperature_high = 3.0;
  double signal = 3.0;  // standard deviation of each base logit
  Distortion distortion = Distortion::kDifficultyBlind;
  double logit_scale = 1.0;  // used by kLogitScale
  std::uint64_t seed = 0;

  void Validate() const;
};

struct SyntheticData {
  Matrix<double> features;                 // n x d
  Matrix<double> logits;                   // emitted, n x k
  std::vector<ClassIndex> labels;          // drawn from the exact conditionals
  std::vector<ProbabilityVector> exact;    // P(y | x)
  std::vector<double> temperature;         // tau(x)

  std::size_t size() const noexcept { return labels.size(); }

  /// Emitted probabilities softmax(logits / T) with the given rows.
  LabeledSplit ToSplit(double T = 1.0) const;
};

/// n samples; generator parameters come from task.seed, draws from
/// sample_seed (defaults to task.seed).
SyntheticData GenerateSynthetic(const SyntheticTask& task, std::size_t n);
SyntheticData GenerateSynthetic(const SyntheticTask& task, std::size_t n,
                                std::uint64_t sample_seed);

/// Dataset with emitted logits as scores and the exact conditionals attached.
Dataset SyntheticToDataset(const SyntheticData& data, const std::string& name);

// --- Experiments ------------------------------------------------------------

struct ExperimentConfig {
  std::vector<Method> methods{AllMethods().begin(), AllMethods().end()};
  std::vector<double> alphas{0.1};
  std::uint32_t trials = 10;
  std::uint64_t seed = 0;
  // Dataset experiments: fractions of the rows for train / val / test.
  std::array<double, 3> fractions{0.8, 0.1, 0.1};
  // Synthetic experiments: fresh samples per trial.
  std::size_t n_train = 4000;
  std::size_t n_val = 2000;
  std::size_t n_test = 5000;
  bool temperature_scaling = true;
  TrainConfig train;  // seed is replaced per trial
  std::optional<RapsGrid> raps_grid;
  int workers = 0;  // 0: OpenMP default
  bool parallel_kernels = false;

  void Validate() const;
};

struct TrialRecord {
  std::uint32_t trial = 0;
  std::uint64_t seed = 0;
  double coverage = 0.0;
  double avg_size = 0.0;
  std::size_t n_test = 0;
  std::optional<double> temperature;
  std::optional<RapsParams> raps;
  std::optional<double> q;
  // CPSN only.
  std::optional<double> delta1, delta2;
  std::optional<std::size_t> n1, n2;
  std::optional<ResidualSummary> residuals;
};

struct EvalReport {
  Method method = Method::kAps;
  double alpha = 0.1;
  std::size_t n_test = 0;  // per trial
  MeanStd coverage;
  MeanStd size;
  double coverage_se_binomial = 0.0;  // sqrt(c (1 - c) / (trials * n_test))
  double coverage_se_trials = 0.0;    // std over trials / sqrt(trials)
  std::vector<TrialRecord> records;
  // CPSN only: delta statistics over trials (finite values).
  std::optional<MeanStd> delta1, delta2;

  /// max of the two standard errors.
  double CoverageSe() const;
};

struct ExperimentReport {
  std::string source;
  ExperimentConfig config;
  std::vector<EvalReport> reports;  // alpha-major, then config.methods order

  const EvalReport& Find(Method method, double alpha) const;
};

ExperimentReport RunSyntheticExperiment(const SyntheticTask& task,
                                        const ExperimentConfig& config);
ExperimentReport RunDatasetExperiment(const Dataset& dataset,
                                      const ExperimentConfig& config);

std::string ReportToJson(const ExperimentReport& report);
/// Aligned text table: one row per method, size and coverage per alpha.
std::string ReportToTable(const ExperimentReport& report);

}  // namespace cptk
