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

// Conformalized prediction-set network.
//
// A regressor learns q(x), the APS score of the true label, from features.
// On a held-out split the residuals r = s(x, y) - q(x) are split by the
// classifier's confidence p_hat = max p into
//     G1 = {p_hat > 1 - alpha},  G2 = {p_hat <= 1 - alpha}
// and each group gets its own conformal quantile delta. A test sample gets
// the set {y : s(x, y) <= q(x) + delta(x)}, top class always included.
// Labels ranked first carry residual -inf since they are always covered.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cptk/core.hpp"
#include "cptk/kernels.hpp"
#include "cptk/regressor.hpp"

namespace cptk {

inline constexpr int kCpsnGroupRuleVersion = 1;

/// Group 1 membership. The boundary p_hat == 1 - alpha belongs to group 2.
inline bool InConfidentGroup(double p_hat, double alpha) {
  return p_hat > 1.0 - alpha;
}

struct CpsnConformalizer {
  RegressorModel model;
  double alpha = 0.1;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double pooled_delta = 0.0;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  bool delta1_pooled = false;  // group 1 was empty
  bool delta2_pooled = false;
  std::uint32_t num_classes = 0;
  int group_rule_version = kCpsnGroupRuleVersion;
  std::optional<double> temperature;

  double DeltaFor(double p_hat) const {
    return InConfidentGroup(p_hat, alpha) ? delta1 : delta2;
  }

  friend bool operator==(const CpsnConformalizer&,
                         const CpsnConformalizer&) = default;
};

/// Deterministic APS score of each true label.
std::vector<double> CpsnTargets(const LabeledSplit& split);

/// Fits the threshold regressor on (features -> APS score of the label).
TrainResult TrainPhase(const LabeledSplit& train, const TrainConfig& config);

struct CpsnResiduals {
  std::vector<double> residuals;   // -inf where the label is ranked first
  std::vector<std::uint8_t> group;  // 1 or 2
};

CpsnResiduals ComputeResiduals(const RegressorModel& model,
                               const LabeledSplit& split, double alpha,
                               bool use_parallel = false);

/// Group quantiles of the residuals; an empty group falls back to the pooled
/// quantile.
CpsnConformalizer ConformalizeFromResiduals(const RegressorModel& model,
                                            const CpsnResiduals& residuals,
                                            double alpha,
                                            std::uint32_t num_classes);

CpsnConformalizer ConformalizePhase(const RegressorModel& model,
                                    const LabeledSplit& val, double alpha,
                                    bool use_parallel = false);

/// q(x) + delta(x); may be infinite or outside [0, 1].
double CpsnThreshold(const CpsnConformalizer& c, std::span<const double> x,
                     const ProbabilityVector& p);

PredictionSet CpsnPredict(const CpsnConformalizer& c,
                          std::span<const double> x,
                          const ProbabilityVector& p);

/// Per-sample thresholds for a whole split.
std::vector<double> CpsnThresholds(const CpsnConformalizer& c,
                                   const LabeledSplit& split,
                                   bool use_parallel = false);

kernels::SetStats EvaluateCpsn(const CpsnConformalizer& c,
                               const LabeledSplit& split,
                               bool use_parallel = false);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 with fewer than 2 values
  std::size_t count = 0;
};

/// Mean and sample standard deviation of the finite values.
MeanStd SummarizeFinite(std::span<const double> values);

struct ResidualSummary {
  MeanStd group1;
  MeanStd group2;
  std::size_t top_ranked = 0;  // residuals equal to -inf
};

ResidualSummary SummarizeResiduals(const CpsnResiduals& residuals);

struct CpsnRun {
  CpsnConformalizer conformalizer;
  std::vector<double> epoch_loss;
  ResidualSummary residuals;
  kernels::SetStats test;
  double coverage = 0.0;
  double avg_size = 0.0;
};

/// Train on `train`, conformalize on `val`, evaluate on `test`.
CpsnRun RunCpsnPipeline(const LabeledSplit& train, const LabeledSplit& val,
                        const LabeledSplit& test, double alpha,
                        const TrainConfig& config, bool use_parallel = false);

/// Writes `<path>` (JSON) and `<path>.model` (regressor blob).
void SaveConformalizer(const std::filesystem::path& path,
                       const CpsnConformalizer& c);
CpsnConformalizer LoadConformalizer(const std::filesystem::path& path);

}  // namespace cptk
