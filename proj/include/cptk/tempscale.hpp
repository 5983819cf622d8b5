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

// Temperature scaling: softmax(z / T) with T fitted by minimum NLL.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cptk/core.hpp"
#include "cptk/matrix.hpp"

namespace cptk {

struct TemperatureModel {
  double temperature = 1.0;
  double nll = 0.0;       // at the fitted temperature
  double nll_at_one = 0.0;
};

struct TemperatureSearch {
  double lower = 0.05;
  double upper = 20.0;
  double tolerance = 1e-4;  // on T
};

inline constexpr std::size_t kMinTemperatureExamples = 10;

/// softmax(logits / T) with max subtraction.
ProbabilityVector ApplyTemperature(std::span<const double> logits, double T);
std::vector<ProbabilityVector> ApplyTemperature(const Matrix<double>& logits,
                                                double T);

/// Mean negative log-likelihood of the labels under softmax(logits / T).
double NegativeLogLikelihood(const Matrix<double>& logits,
                             std::span<const ClassIndex> labels, double T);

/// Golden-section search for the NLL-minimising T. T = 1 is also evaluated
/// and wins if it is at least as good.
TemperatureModel FitTemperature(const Matrix<double>& logits,
                                std::span<const ClassIndex> labels,
                                const TemperatureSearch& search = {});

/// log p, with zeros mapped to a large negative finite value, so that stored
/// probabilities can be rescaled like logits.
Matrix<double> LogProbabilities(std::span<const ProbabilityVector> probs);

}  // namespace cptk
