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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "cptk/conformal.hpp"
#include "cptk/error.hpp"
#include "cptk/rng.hpp"
#include "test_util.hpp"

namespace cptk {
namespace {

using testing::P;
using testing::RandomSplit;

constexpr double kInf = std::numeric_limits<double>::infinity();

// Sort-and-index reference.
double ReferenceQuantile(std::vector<double> scores, double alpha) {
  const double target = (scores.size() + 1) * (1.0 - alpha);
  std::size_t rank = static_cast<std::size_t>(std::ceil(target - 1e-9));
  if (rank > scores.size()) return kInf;
  std::sort(scores.begin(), scores.end());
  return scores[std::max<std::size_t>(rank, 1) - 1];
}

TEST(ConformalQuantileTest, Examples) {
  std::vector<double> s;
  for (int i = 1; i <= 10; ++i) s.push_back(i / 10.0);
  EXPECT_DOUBLE_EQ(ConformalQuantile(s, 0.5), 0.6);
  EXPECT_EQ(ConformalQuantile(s, 0.05), kInf);
  EXPECT_EQ(ConformalRank(99, 0.1), 90u);
  EXPECT_EQ(ConformalRank(10, 0.5), 6u);
  EXPECT_EQ(ConformalRank(10, 0.05), 11u);
  EXPECT_EQ(ConformalRank(1999, 0.1), 1800u);
}

TEST(ConformalQuantileTest, NinetyNineScores) {
  Rng rng(1);
  std::vector<double> s(99);
  for (double& v : s) v = rng.Uniform();
  auto sorted = s;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(ConformalQuantile(s, 0.1), sorted[89]);
}

TEST(ConformalQuantileTest, MatchesSortReference) {
  Rng rng(2);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng.UniformIndex(1000);
    std::vector<double> s(n);
    const bool discrete = t % 3 == 0;
    for (double& v : s) {
      v = discrete ? static_cast<double>(rng.UniformIndex(5)) : rng.Uniform();
    }
    const double alpha = t % 7 == 0 ? 0.01 : rng.Uniform(0.001, 0.999);
    EXPECT_EQ(ConformalQuantile(s, alpha), ReferenceQuantile(s, alpha))
        << "n=" << n << " alpha=" << alpha;
  }
}

TEST(ConformalQuantileTest, Errors) {
  EXPECT_THROW(ConformalQuantile({}, 0.1), Error);
  const std::vector<double> s{0.1, 0.2};
  EXPECT_THROW(ConformalQuantile(s, 0.0), Error);
  EXPECT_THROW(ConformalQuantile(s, 1.0), Error);
  EXPECT_THROW(ConformalQuantile(s, 1.5), Error);
  EXPECT_THROW(ConformalQuantile(std::vector<double>{NAN, 0.1}, 0.5), Error);
}

TEST(CalibrateTest, SingleExampleGivesFullSets) {
  LabeledSplit s;
  s.features = Matrix<double>(1, 1);
  s.probs = {P({0.5, 0.3, 0.2})};
  s.labels = {1};
  const auto t = Calibrate(s, 0.2, Method::kAps);
  EXPECT_EQ(t.q, kInf);
  EXPECT_EQ(PredictSet(t, P({0.9, 0.05, 0.05})).size(), 3u);
}

TEST(CalibrateTest, IdenticalScores) {
  LabeledSplit s;
  s.features = Matrix<double>(50, 1);
  for (int i = 0; i < 50; ++i) {
    s.probs.push_back(P({0.5, 0.3, 0.2}));
    s.labels.push_back(1);
  }
  EXPECT_NEAR(Calibrate(s, 0.1, Method::kAps).q, 0.8, 1e-12);
}

TEST(CalibrateTest, MismatchedClassesRejected) {
  LabeledSplit s;
  s.features = Matrix<double>(2, 1);
  s.probs = {P({0.5, 0.5}), P({0.5, 0.3, 0.2})};
  s.labels = {0, 0};
  EXPECT_THROW(Calibrate(s, 0.1, Method::kAps), Error);
  EXPECT_THROW(Calibrate(LabeledSplit{}, 0.1, Method::kAps), Error);
}

TEST(CalibrateTest, RapsNeedsParameters) {
  Rng rng(3);
  const auto s = RandomSplit(rng, 30, 4, 1.0);
  EXPECT_THROW(Calibrate(s, 0.1, Method::kRaps), Error);
  EXPECT_NO_THROW(Calibrate(s, 0.1, Method::kRaps, RapsParams{0.1, 1}));
}

TEST(CalibrateTest, CalibrationSplitCoverage) {
  Rng rng(4);
  const Method methods[] = {Method::kAps, Method::kApsRandomized,
                            Method::kRaps, Method::kRapsRandomized};
  for (int t = 0; t < 20; ++t) {
    const auto s = RandomSplit(rng, 50 + rng.UniformIndex(300), 5, 1.5);
    const double alpha = rng.Uniform(0.02, 0.4);
    for (Method m : methods) {
      const std::optional<RapsParams> raps = RapsParams{0.05, 2};
      const auto scores = ComputeScores(s, m, raps, 9);
      const auto th = Calibrate(s, alpha, m, raps, 9);
      std::size_t covered = 0;
      for (double v : scores.scores) covered += v <= th.q;
      EXPECT_GE(static_cast<double>(covered) / s.size(), 1.0 - alpha);
      // The calibration score and the prediction set agree per sample.
      for (std::size_t i = 0; i < s.size(); ++i) {
        const auto set = PredictSetWithDraw(th, s.probs[i],
                                            CalibrationDraw(9, i));
        EXPECT_EQ(set.Contains(s.labels[i]), scores.scores[i] <= th.q);
      }
    }
  }
}

TEST(PredictSetTest, Examples) {
  CalibratedThreshold full;
  full.method = Method::kAps;
  full.q = kInf;
  EXPECT_EQ(PredictSet(full, P({0.5, 0.3, 0.2})).size(), 3u);

  CalibratedThreshold aps;
  aps.method = Method::kAps;
  aps.q = 0.5;
  EXPECT_EQ(PredictSet(aps, P({0.5, 0.3, 0.2})).classes,
            (std::vector<ClassIndex>{0}));

  aps.num_classes = 3;
  EXPECT_THROW(PredictSet(aps, P({0.5, 0.5})), Error);
}

TEST(PredictSetTest, RandomizedBoundaryFrequency) {
  CalibratedThreshold t;
  t.method = Method::kApsRandomized;
  t.randomized = true;
  t.q = 0.65;
  t.seed = 1234;
  const auto p = P({0.5, 0.3, 0.2});
  int hits = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) hits += PredictSet(t, p, i).Contains(1);
  EXPECT_NEAR(hits / static_cast<double>(draws), 0.5, 0.02);
  // Same ordinal, same draw.
  EXPECT_EQ(PredictSet(t, p, 17).classes, PredictSet(t, p, 17).classes);
  for (double u : {0.0, 0.49, 0.5}) {
    EXPECT_TRUE(PredictSetWithDraw(t, p, u).Contains(1));
  }
  EXPECT_FALSE(PredictSetWithDraw(t, p, 0.51).Contains(1));
}

TEST(NaiveTest, Examples) {
  EXPECT_DOUBLE_EQ(NaiveThreshold(0.1).q, 0.9);
  EXPECT_DOUBLE_EQ(NaiveThreshold(0.05).q, 0.95);
  EXPECT_EQ(PredictSet(NaiveThreshold(0.1), P({0.95, 0.05})).classes,
            (std::vector<ClassIndex>{0}));
  // Mass-prefix construction, unlike the calibrated methods.
  EXPECT_EQ(PredictSet(NaiveThreshold(0.1), P({0.5, 0.3, 0.2})).size(), 3u);
  EXPECT_EQ(PredictSet(NaiveThreshold(0.25), P({0.5, 0.3, 0.2})).size(), 2u);
  EXPECT_THROW(NaiveThreshold(0.0), Error);
}

TEST(MethodNameTest, RoundTrip) {
  for (Method m : AllMethods()) EXPECT_EQ(MethodFromName(MethodName(m)), m);
  EXPECT_EQ(AllMethods().size(), 6u);
  EXPECT_THROW(MethodFromName("bogus"), Error);
}

TEST(TuneRapsTest, SinglePairGrid) {
  Rng rng(5);
  const auto s = RandomSplit(rng, 200, 5, 1.0);
  const RapsGrid grid{{0.05}, {3}};
  EXPECT_EQ(TuneRaps(s, 0.1, grid, 1), (RapsParams{0.05, 3}));
}

TEST(TuneRapsTest, TooSmall) {
  Rng rng(6);
  const auto s = RandomSplit(rng, 19, 3, 1.0);
  EXPECT_THROW(TuneRaps(s, 0.1), Error);
}

TEST(TuneRapsTest, DefaultGrid) {
  const auto g = DefaultRapsGrid(3);
  EXPECT_EQ(g.a, (std::vector<double>{0.001, 0.01, 0.05, 0.1, 0.5}));
  EXPECT_EQ(g.b, (std::vector<std::uint32_t>{1, 2, 3}));
  EXPECT_EQ(DefaultRapsGrid(20).b.size(), 10u);
}

// Each pair evaluated alone is the oracle for the full search.
TEST(TuneRapsTest, ExhaustiveGridOracle) {
  Rng rng(7);
  const auto s = RandomSplit(rng, 400, 3, 3.0);
  RapsGrid grid = DefaultRapsGrid(3);
  grid.a.insert(grid.a.begin(), 0.0);
  const auto tuned = TuneRapsDetailed(s, 0.1, grid, 3);
  double best = kInf;
  RapsParams best_params;
  for (double a : grid.a) {
    for (std::uint32_t b : grid.b) {
      const auto one = TuneRapsDetailed(s, 0.1, RapsGrid{{a}, {b}}, 3);
      if (one.best_size < best) {
        best = one.best_size;
        best_params = {a, b};
      }
    }
  }
  EXPECT_EQ(tuned.best, best_params);
  EXPECT_DOUBLE_EQ(tuned.best_size, best);
  // a = 0 is plain APS, so the tuned size is never worse.
  for (std::size_t j = 0; j < grid.b.size(); ++j) {
    EXPECT_LE(tuned.best_size, tuned.sizes[j]);
  }
  EXPECT_EQ(tuned.sizes.size(), grid.a.size() * grid.b.size());
}

TEST(TuneRapsTest, TiesPreferSmallerParameters) {
  // Every example is certain, so every pair gives singletons.
  LabeledSplit s;
  s.features = Matrix<double>(40, 1);
  for (int i = 0; i < 40; ++i) {
    s.probs.push_back(P({1.0, 0.0, 0.0}));
    s.labels.push_back(0);
  }
  EXPECT_EQ(TuneRaps(s, 0.1, {}, 0), (RapsParams{0.001, 1}));
}

TEST(ThresholdJsonTest, RoundTrip) {
  CalibratedThreshold t;
  t.method = Method::kRapsRandomized;
  t.alpha = 0.05;
  t.q = 0.8123456789012345;
  t.n_cal = 2000;
  t.raps = RapsParams{0.01, 3};
  t.randomized = true;
  t.seed = 0xDEADBEEFCAFEULL;
  t.num_classes = 11;
  t.temperature = 1.75;
  EXPECT_EQ(ThresholdFromJson(ThresholdToJson(t)), t);
  t.q = kInf;
  t.temperature.reset();
  t.raps.reset();
  t.method = Method::kAps;
  EXPECT_EQ(ThresholdFromJson(ThresholdToJson(t)), t);
  EXPECT_THROW(ThresholdFromJson("{}"), Error);
  EXPECT_THROW(ThresholdFromJson("not json"), Error);
}

struct CoverageCase {
  Method method;
  double alpha;
};

class CoverageTest : public ::testing::TestWithParam<CoverageCase> {};

// Exact probabilities, n_cal = 1000, 100 trials.
TEST_P(CoverageTest, WithinBand) {
  const auto [method, alpha] = GetParam();
  const int trials = 100;
  const std::size_t n_cal = 1000, n_test = 1000;
  double total = 0.0;
  for (int t = 0; t < trials; ++t) {
    Rng rng(DeriveSeed(99, static_cast<std::uint64_t>(t)));
    const auto cal = RandomSplit(rng, n_cal, 6, 1.5);
    const auto test = RandomSplit(rng, n_test, 6, 1.5);
    const std::optional<RapsParams> raps = RapsParams{0.05, 2};
    const auto th = Calibrate(cal, alpha, method, raps, t);
    const auto stats = EvaluateThreshold(th, test);
    std::size_t c = 0;
    for (auto v : stats.covered) c += v;
    total += static_cast<double>(c) / n_test;
  }
  const double mean = total / trials;
  const double target = 1.0 - alpha;
  const double se = std::sqrt(target * alpha / (trials * n_test));
  EXPECT_GE(mean, target - 3 * se);
  EXPECT_LE(mean, target + 1.0 / (n_cal + 1) + 3 * se);
}

INSTANTIATE_TEST_SUITE_P(
    Methods, CoverageTest,
    ::testing::Values(CoverageCase{Method::kAps, 0.1},
                      CoverageCase{Method::kApsRandomized, 0.1},
                      CoverageCase{Method::kRaps, 0.1},
                      CoverageCase{Method::kRapsRandomized, 0.1},
                      CoverageCase{Method::kAps, 0.05},
                      CoverageCase{Method::kApsRandomized, 0.05}));

TEST(EvaluateThresholdTest, SerialMatchesParallel) {
  Rng rng(8);
  const auto s = RandomSplit(rng, 500, 7, 1.0);
  for (Method m : {Method::kNaive, Method::kAps, Method::kApsRandomized,
                   Method::kRaps, Method::kRapsRandomized}) {
    const auto th = Calibrate(s, 0.1, m, RapsParams{0.1, 2}, 5);
    const auto a = EvaluateThreshold(th, s, false);
    const auto b = EvaluateThreshold(th, s, true);
    EXPECT_EQ(a.sizes, b.sizes);
    EXPECT_EQ(a.covered, b.covered);
    for (std::size_t i = 0; i < s.size(); i += 37) {
      const auto set = PredictSet(th, s.probs[i], i);
      EXPECT_EQ(set.size(), a.sizes[i]);
      EXPECT_EQ(set.Contains(s.labels[i]), a.covered[i] != 0);
    }
  }
}

}  // namespace
}  // namespace cptk
