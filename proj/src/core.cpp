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

#include "cptk/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cptk/error.hpp"

namespace cptk {

ProbabilityVector ProbabilityVector::FromValues(std::span<const double> values) {
  if (values.size() < 2) {
    throw ValidationError("probability vector needs at least 2 classes, got " +
                          std::to_string(values.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw ValidationError("probability entry " + std::to_string(i) +
                            " is outside [0, 1]: " + std::to_string(v));
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kProbabilitySumTolerance) {
    throw ValidationError("probabilities sum to " + std::to_string(sum) +
                          ", expected 1 within 1e-6");
  }
  ProbabilityVector out;
  out.probs_.assign(values.begin(), values.end());
  if (sum != 1.0) {
    for (double& v : out.probs_) v /= sum;
  }
  return out;
}

double ProbabilityVector::Max() const noexcept {
  return *std::max_element(probs_.begin(), probs_.end());
}

std::size_t RankedProbabilities::TieBegin(std::size_t j) const {
  while (j > 0 && sorted[j - 1] == sorted[j]) --j;
  return j;
}

std::size_t RankedProbabilities::TieEnd(std::size_t j) const {
  while (j + 1 < sorted.size() && sorted[j + 1] == sorted[j]) ++j;
  return j;
}

RankedProbabilities Rank(const ProbabilityVector& p) {
  const std::size_t k = p.size();
  RankedProbabilities r;
  r.order.resize(k);
  std::iota(r.order.begin(), r.order.end(), ClassIndex{0});
  std::stable_sort(r.order.begin(), r.order.end(),
                   [&](ClassIndex a, ClassIndex b) { return p[a] > p[b]; });
  r.rank_of.resize(k);
  r.sorted.resize(k);
  r.cumsum.resize(k);
  double acc = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    r.rank_of[r.order[j]] = j;
    r.sorted[j] = p[r.order[j]];
    acc += r.sorted[j];
    r.cumsum[j] = acc;
  }
  // The full set always carries mass exactly 1.
  r.cumsum[k - 1] = 1.0;
  return r;
}

bool PredictionSet::Contains(ClassIndex c) const {
  return std::find(classes.begin(), classes.end(), c) != classes.end();
}

void RapsParams::Validate(std::size_t num_classes) const {
  if (!std::isfinite(a) || a < 0.0) {
    throw ValidationError("RAPS penalty a must be >= 0, got " +
                          std::to_string(a));
  }
  if (b < 1 || b > num_classes) {
    throw ValidationError("RAPS rank cutoff b must be in [1, " +
                          std::to_string(num_classes) + "], got " +
                          std::to_string(b));
  }
}

void LabeledSplit::Validate() const {
  if (probs.size() != labels.size()) {
    throw ShapeError("split has " + std::to_string(probs.size()) +
                     " probability rows but " + std::to_string(labels.size()) +
                     " labels");
  }
  if (!features.empty() && features.rows() != labels.size()) {
    throw ShapeError("split has " + std::to_string(features.rows()) +
                     " feature rows but " + std::to_string(labels.size()) +
                     " labels");
  }
  const std::size_t k = num_classes();
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i].size() != k) {
      throw ShapeError("row " + std::to_string(i) + " has " +
                       std::to_string(probs[i].size()) + " classes, expected " +
                       std::to_string(k));
    }
    if (labels[i] >= k) {
      throw ValidationError("label " + std::to_string(labels[i]) + " at row " +
                            std::to_string(i) + " is out of range for k=" +
                            std::to_string(k));
    }
  }
}

LabeledSplit LabeledSplit::Subset(std::span<const std::size_t> rows) const {
  LabeledSplit out;
  if (!features.empty()) out.features = features.Gather(rows);
  out.probs.reserve(rows.size());
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) {
    out.probs.push_back(probs[r]);
    out.labels.push_back(labels[r]);
  }
  return out;
}

namespace {

void CheckLabel(const ProbabilityVector& p, ClassIndex y) {
  if (y >= p.size()) {
    throw ValidationError("class index " + std::to_string(y) +
                          " out of range for k=" + std::to_string(p.size()));
  }
}

void CheckUnit(double u) {
  if (!(u >= 0.0 && u <= 1.0)) {
    throw ValidationError("randomization draw u must be in [0, 1], got " +
                          std::to_string(u));
  }
}

double PrefixMass(const RankedProbabilities& r, std::size_t count) {
  return count == 0 ? 0.0 : r.cumsum[count - 1];
}

double Penalty(const RapsParams& params, std::size_t ranks) {
  return ranks > params.b ? params.a * static_cast<double>(ranks - params.b)
                          : 0.0;
}

}  // namespace

PredictionSet BuildPredictionSet(const RankedProbabilities& ranked, double v) {
  const double target = std::clamp(v, 0.0, 1.0);
  std::size_t l = 0;
  while (l + 1 < ranked.size() && ranked.cumsum[l] < target) ++l;
  PredictionSet set;
  set.classes.assign(ranked.order.begin(), ranked.order.begin() + l + 1);
  set.threshold_used = target;
  return set;
}

PredictionSet BuildPredictionSet(const ProbabilityVector& p, double v) {
  return BuildPredictionSet(Rank(p), v);
}

double ScoreAtRank(const RankedProbabilities& r, std::size_t pos,
                   const ScoreSpec& spec, double u) {
  if (spec.family == ScoreFamily::kAps) {
    if (!spec.randomized) return r.cumsum[r.TieEnd(pos)];
    // Strictly more probable classes, then a fraction of the label's mass.
    return PrefixMass(r, r.TieBegin(pos)) + u * r.sorted[pos];
  }
  if (!spec.randomized) {
    const std::size_t last = r.TieEnd(pos);
    return r.cumsum[last] + Penalty(spec.raps, last + 1);
  }
  const std::size_t rank1 = pos + 1;
  const double above = PrefixMass(r, pos) + Penalty(spec.raps, pos);
  const double own = r.sorted[pos] + (rank1 > spec.raps.b ? spec.raps.a : 0.0);
  return above + u * own;
}

double ApsScore(const ProbabilityVector& p, ClassIndex y) {
  CheckLabel(p, y);
  const auto r = Rank(p);
  return ScoreAtRank(r, r.rank_of[y], {ScoreFamily::kAps, false, {}}, 1.0);
}

double ApsScoreRandomized(const ProbabilityVector& p, ClassIndex y, double u) {
  CheckLabel(p, y);
  CheckUnit(u);
  const auto r = Rank(p);
  return ScoreAtRank(r, r.rank_of[y], {ScoreFamily::kAps, true, {}}, u);
}

double RapsScore(const ProbabilityVector& p, ClassIndex y,
                 const RapsParams& params) {
  CheckLabel(p, y);
  params.Validate(p.size());
  const auto r = Rank(p);
  return ScoreAtRank(r, r.rank_of[y], {ScoreFamily::kRaps, false, params}, 1.0);
}

double RapsScoreRandomized(const ProbabilityVector& p, ClassIndex y,
                           const RapsParams& params, double u) {
  CheckLabel(p, y);
  CheckUnit(u);
  params.Validate(p.size());
  const auto r = Rank(p);
  return ScoreAtRank(r, r.rank_of[y], {ScoreFamily::kRaps, true, params}, u);
}

std::size_t ScoreInversePrefix(const RankedProbabilities& ranked,
                               const ScoreSpec& spec, double u,
                               double threshold) {
  std::size_t l = 0;
  while (l < ranked.size() && ScoreAtRank(ranked, l, spec, u) <= threshold) ++l;
  return l;
}

PredictionSet ScoreInverseSet(const ProbabilityVector& p, double threshold,
                              const ScoreSpec& spec, double u, bool nonempty) {
  const auto r = Rank(p);
  std::size_t l = ScoreInversePrefix(r, spec, u, threshold);
  if (nonempty) l = std::max<std::size_t>(l, 1);
  PredictionSet set;
  set.classes.assign(r.order.begin(), r.order.begin() + l);
  set.threshold_used = threshold;
  return set;
}

}  // namespace cptk
