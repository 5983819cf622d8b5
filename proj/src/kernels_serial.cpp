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

#include <algorithm>
#include <string>

#include "cptk/error.hpp"
#include "cptk/kernels.hpp"
#include "kernels_impl.hpp"

namespace cptk::kernels {

void CheckBatch(std::span<const ProbabilityVector> probs,
                std::span<const ClassIndex> labels, std::span<const double> u,
                std::span<const double> thresholds) {
  const std::size_t n = probs.size();
  if (!labels.empty() && labels.size() != n) {
    throw ShapeError("batch has " + std::to_string(n) + " rows but " +
                     std::to_string(labels.size()) + " labels");
  }
  if (!u.empty() && u.size() != n) {
    throw ShapeError("batch has " + std::to_string(n) + " rows but " +
                     std::to_string(u.size()) + " uniform draws");
  }
  if (thresholds.size() != 1 && thresholds.size() != n) {
    throw ShapeError("expected 1 or " + std::to_string(n) +
                     " thresholds, got " + std::to_string(thresholds.size()));
  }
  if (n == 0) return;
  const std::size_t k = probs.front().size();
  for (std::size_t i = 0; i < n; ++i) {
    if (probs[i].size() != k) {
      throw ShapeError("row " + std::to_string(i) + " has " +
                       std::to_string(probs[i].size()) + " classes, expected " +
                       std::to_string(k));
    }
    if (!labels.empty() && labels[i] >= k) {
      throw ValidationError("label " + std::to_string(labels[i]) +
                            " out of range for k=" + std::to_string(k));
    }
  }
}

namespace detail {

double ScoreOne(const ProbabilityVector& p, ClassIndex y, const ScoreSpec& spec,
                double u, std::optional<double> top_label_value) {
  const RankedProbabilities r = Rank(p);
  const std::size_t pos = r.rank_of[y];
  if (top_label_value && pos == 0) return *top_label_value;
  return ScoreAtRank(r, pos, spec, u);
}

void EvaluateOne(const ProbabilityVector& p, ClassIndex y, const SetSpec& spec,
                 double threshold, double u, std::uint32_t& size,
                 std::uint8_t& covered) {
  const RankedProbabilities r = Rank(p);
  std::size_t l;
  if (spec.rule == SetRule::kMassReaches) {
    l = BuildPredictionSet(r, threshold).size();
  } else {
    l = std::max<std::size_t>(1, ScoreInversePrefix(r, spec.score, u, threshold));
  }
  size = static_cast<std::uint32_t>(l);
  covered = r.rank_of[y] < l ? 1 : 0;
}

}  // namespace detail

namespace serial {

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
  for (std::size_t i = 0; i < probs.size(); ++i) {
    out[i] = detail::ScoreOne(probs[i], labels[i], spec, u.empty() ? 1.0 : u[i],
                              top_label_value);
  }
}

void EvaluateSets(std::span<const ProbabilityVector> probs,
                  std::span<const ClassIndex> labels, const SetSpec& spec,
                  std::span<const double> thresholds,
                  std::span<const double> u, SetStats& out) {
  CheckBatch(probs, labels, u, thresholds);
  const std::size_t n = probs.size();
  out.sizes.assign(n, 0);
  out.covered.assign(n, 0);
  const bool shared = thresholds.size() == 1;
  for (std::size_t i = 0; i < n; ++i) {
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
  for (std::size_t i = 0; i < features.rows(); ++i) {
    out[i] = cptk::Forward(model, features.row(i));
  }
}

}  // namespace serial
}  // namespace cptk::kernels
