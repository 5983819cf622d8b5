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

#include <cstdint>

#include "cptk/error.hpp"
#include "cptk/kernels.hpp"
#include "kernels_impl.hpp"

namespace cptk::kernels::parallel {

void ConformalScores(std::span<const ProbabilityVector> probs,
                     std::span<const ClassIndex> labels, const ScoreSpec& spec,
                     std::span<const double> u,
                     std::optional<double> top_label_value,
                     std::span<double> out) {
  const double one = 1.0;
  CheckBatch(probs, labels, u, {&one, 1});
  if (labels.size() != probs.size() || out.size() != probs.size()) {
    throw ShapeError("score batch needs one label and one output per row");
  }
  const auto n = static_cast<std::int64_t>(probs.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    out[i] = detail::ScoreOne(probs[i], labels[i], spec, u.empty() ? 1.0 : u[i],
                              top_label_value);
  }
}

void EvaluateSets(std::span<const ProbabilityVector> probs,
                  std::span<const ClassIndex> labels, const SetSpec& spec,
                  std::span<const double> thresholds,
                  std::span<const double> u, SetStats& out) {
  CheckBatch(probs, labels, u, thresholds);
  out.sizes.assign(probs.size(), 0);
  out.covered.assign(probs.size(), 0);
  const bool shared = thresholds.size() == 1;
  const auto n = static_cast<std::int64_t>(probs.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    detail::EvaluateOne(probs[i], labels.empty() ? 0 : labels[i], spec,
                        shared ? thresholds[0] : thresholds[i],
                        u.empty() ? 1.0 : u[i], out.sizes[i], out.covered[i]);
  }
}

void Forward(const RegressorModel& model, const Matrix<double>& features,
             std::span<double> out) {
  if (out.size() != features.rows()) {
    throw ShapeError("forward output has the wrong length");
  }
  if (features.cols() != model.input_dim) {
    throw ShapeError("feature dimension does not match regressor input");
  }
  const auto n = static_cast<std::int64_t>(features.rows());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    out[i] = cptk::Forward(model, features.row(i));
  }
}

}  // namespace cptk::kernels::parallel
