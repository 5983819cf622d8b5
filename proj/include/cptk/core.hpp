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

// Domain types, probability ranking, conformal scores and set construction.
//
// Two set families live here:
//
//  * BuildPredictionSet(p, v): the shortest ranking prefix whose cumulative
//    mass reaches v. This is the "sum until it just exceeds v" rule used by
//    the naive method. A class y at rank j enters this set exactly when
//    v > (mass strictly ranked above y).
//
//  * ScoreInverseSet(p, t, spec, u): every class whose conformal score is at
//    most t. This is the set whose membership test is `score(x, y) <= t`,
//    which is what calibrated thresholds need for their coverage to be exact.
//
// All functions are pure.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cptk/matrix.hpp"

namespace cptk {

using ClassIndex = std::uint32_t;

/// Tolerance on |sum - 1| for accepting (and renormalising) a probability row.
inline constexpr double kProbabilitySumTolerance = 1e-6;

/// One sample's class-probability vector. Always valid once constructed:
/// k >= 2, entries in [0, 1], sum renormalised to 1.
class ProbabilityVector {
 public:
  ProbabilityVector() = default;

  /// Validates and renormalises. Throws a validation error naming the first
  /// offending index (negative, > 1, non-finite), or reporting a bad sum.
  static ProbabilityVector FromValues(std::span<const double> values);

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> values() const noexcept { return probs_; }

  /// Largest entry (the classifier's confidence).
  double Max() const noexcept;

 private:
  std::vector<double> probs_;
};

/// Classes sorted by descending probability, ties by ascending index.
struct RankedProbabilities {
  std::vector<ClassIndex> order;     // order[j] = class at rank j (0-based)
  std::vector<std::size_t> rank_of;  // inverse permutation of `order`
  std::vector<double> cumsum;        // cumsum[j] = mass of ranks 0..j
  std::vector<double> sorted;        // sorted[j] = probability at rank j

  std::size_t size() const noexcept { return order.size(); }

  /// First and last rank sharing the probability at rank j.
  std::size_t TieBegin(std::size_t j) const;
  std::size_t TieEnd(std::size_t j) const;
};

RankedProbabilities Rank(const ProbabilityVector& p);

struct PredictionSet {
  std::vector<ClassIndex> classes;  // a ranking prefix, top class first
  double threshold_used = 0.0;

  std::size_t size() const noexcept { return classes.size(); }
  bool Contains(ClassIndex c) const;
};

struct RapsParams {
  double a = 0.0;       // penalty weight per rank beyond b
  std::uint32_t b = 1;  // ranks 1..b are free

  /// Throws unless a >= 0 (finite) and 1 <= b <= num_classes.
  void Validate(std::size_t num_classes) const;

  friend bool operator==(const RapsParams&, const RapsParams&) = default;
};

/// A dataset split ready for calibration: features, probabilities, labels.
struct LabeledSplit {
  Matrix<double> features;                // n x d
  std::vector<ProbabilityVector> probs;   // n rows of length k
  std::vector<ClassIndex> labels;         // n labels in [0, k)

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t num_classes() const noexcept {
    return probs.empty() ? 0 : probs.front().size();
  }
  std::size_t feature_dim() const noexcept { return features.cols(); }

  /// Checks consistent k across rows, labels < k, and row counts.
  void Validate() const;

  LabeledSplit Subset(std::span<const std::size_t> rows) const;
};

// --- Mass-prefix sets -----------------------------------------------------------

/// Shortest ranking prefix whose cumulative mass is >= clamp(v, 0, 1). Never
/// empty.
PredictionSet BuildPredictionSet(const ProbabilityVector& p, double v);
PredictionSet BuildPredictionSet(const RankedProbabilities& ranked, double v);

// --- Conformal scores -------------------------------------------------------

enum class ScoreFamily { kAps, kRaps };

/// Which conformal score to use. Deterministic scores are the u = 1 case of
/// the randomized rule only when no ties touch the label.
struct ScoreSpec {
  ScoreFamily family = ScoreFamily::kAps;
  bool randomized = false;
  RapsParams raps;  // ignored for kAps
};

/// Score the class sitting at rank position `pos` would receive.
double ScoreAtRank(const RankedProbabilities& ranked, std::size_t pos,
                   const ScoreSpec& spec, double u);

/// Sum of p_i over classes with p_i >= p_y.
double ApsScore(const ProbabilityVector& p, ClassIndex y);

/// u * p_y + sum of p_i over classes with p_i > p_y. Throws unless u in [0,1].
double ApsScoreRandomized(const ProbabilityVector& p, ClassIndex y, double u);

/// Sum over ranks i (1-based) with p_(i) >= p_y of p_(i) + a * [i > b].
double RapsScore(const ProbabilityVector& p, ClassIndex y,
                 const RapsParams& params);

/// u * (p_y + a * [rank(y) > b]) + the RAPS terms of every rank above y.
double RapsScoreRandomized(const ProbabilityVector& p, ClassIndex y,
                           const RapsParams& params, double u);

// --- Score-inverse sets -----------------------------------------------------

/// Number of leading ranks whose score is <= threshold (0..k). Scores are
/// nondecreasing along the ranking, so the qualifying classes form a prefix.
std::size_t ScoreInversePrefix(const RankedProbabilities& ranked,
                               const ScoreSpec& spec, double u,
                               double threshold);

/// {y : score(p, y, u) <= threshold}. With `nonempty`, the top class is kept
/// even when its own score exceeds the threshold.
PredictionSet ScoreInverseSet(const ProbabilityVector& p, double threshold,
                              const ScoreSpec& spec, double u,
                              bool nonempty = true);

}  // namespace cptk
