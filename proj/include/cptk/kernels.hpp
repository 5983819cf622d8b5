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

// Per-sample batch kernels.
//
// `serial` is the reference implementation; `parallel` splits the same loops
// across OpenMP threads. Each output element depends only on its own sample
// (randomisation comes in as a per-sample array), so the two produce
// bit-identical results. Tests compare them element by element.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cptk/core.hpp"
#include "cptk/matrix.hpp"
#include "cptk/regressor.hpp"

namespace cptk::kernels {

enum class SetRule {
  kMassReaches,  // BuildPredictionSet: shortest prefix with mass >= threshold
  kScoreAtMost,  // ScoreInverseSet: classes with score <= threshold, top kept
};

struct SetSpec {
  SetRule rule = SetRule::kScoreAtMost;
  ScoreSpec score;
};

/// Per-sample set sizes and label-coverage flags.
struct SetStats {
  std::vector<std::uint32_t> sizes;
  std::vector<std::uint8_t> covered;
};

namespace serial {

/// Conformal score of each (probs[i], labels[i]). `u` is empty for
/// deterministic scores. Samples whose label is ranked first get
/// `top_label_value` instead, when one is given.
void ConformalScores(std::span<const ProbabilityVector> probs,
                     std::span<const ClassIndex> labels, const ScoreSpec& spec,
                     std::span<const double> u,
                     std::optional<double> top_label_value,
                     std::span<double> out);

/// Builds each sample's set under `spec` and records its size and whether it
/// covers the label. `thresholds` holds one shared value or one per sample.
void EvaluateSets(std::span<const ProbabilityVector> probs,
                  std::span<const ClassIndex> labels, const SetSpec& spec,
                  std::span<const double> thresholds,
                  std::span<const double> u, SetStats& out);

/// Regressor output for every feature row.
void Forward(const RegressorModel& model, const Matrix<double>& features,
             std::span<double> out);

}  // namespace serial

namespace parallel {

void ConformalScores(std::span<const ProbabilityVector> probs,
                     std::span<const ClassIndex> labels, const ScoreSpec& spec,
                     std::span<const double> u,
                     std::optional<double> top_label_value,
                     std::span<double> out);

void EvaluateSets(std::span<const ProbabilityVector> probs,
                  std::span<const ClassIndex> labels, const SetSpec& spec,
                  std::span<const double> thresholds,
                  std::span<const double> u, SetStats& out);

void Forward(const RegressorModel& model, const Matrix<double>& features,
             std::span<double> out);

}  // namespace parallel

/// Shape checks shared by both implementations.
void CheckBatch(std::span<const ProbabilityVector> probs,
                std::span<const ClassIndex> labels, std::span<const double> u,
                std::span<const double> thresholds);

}  // namespace cptk::kernels
