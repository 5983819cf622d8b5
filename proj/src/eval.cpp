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

#include "cptk/eval.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>

#include "cptk/error.hpp"
#include "cptk/rng.hpp"
#include "cptk/tempscale.hpp"

namespace cptk {

double Coverage(std::span<const PredictionSet> sets,
                std::span<const ClassIndex> labels) {
  if (sets.size() != labels.size()) {
    throw ShapeError("coverage needs one label per prediction set");
  }
  if (sets.empty()) throw ValidationError("coverage of no prediction sets");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    if (sets[i].Contains(labels[i])) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(sets.size());
}

double AvgSize(std::span<const PredictionSet> sets) {
  if (sets.empty()) throw ValidationError("average size of no prediction sets");
  double total = 0.0;
  for (const auto& s : sets) total += static_cast<double>(s.size());
  return total / static_cast<double>(sets.size());
}

double Coverage(const kernels::SetStats& stats) {
  if (stats.covered.empty()) throw ValidationError("coverage of no samples");
  double hit = 0.0;
  for (std::uint8_t c : stats.covered) hit += c;
  return hit / static_cast<double>(stats.covered.size());
}

double AvgSize(const kernels::SetStats& stats) {
  if (stats.sizes.empty()) throw ValidationError("average size of no samples");
  double total = 0.0;
  for (std::uint32_t s : stats.sizes) total += s;
  return total / static_cast<double>(stats.sizes.size());
}

void ExperimentConfig::Validate() const {
  if (methods.empty()) throw ValidationError("no methods requested");
  if (alphas.empty()) throw ValidationError("no alpha values requested");
  for (double a : alphas) ValidateAlpha(a);
  if (trials < 1) throw ValidationError("trials must be >= 1");
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw ValidationError("split fractions must be nonnegative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ValidationError("split fractions must sum to 1");
  }
  if (workers < 0) throw ValidationError("workers must be >= 0");
  train.Validate();
}

double EvalReport::CoverageSe() const {
  return std::max(coverage_se_binomial, coverage_se_trials);
}

const EvalReport& ExperimentReport::Find(Method method, double alpha) const {
  for (const auto& r : reports) {
    if (r.method == method && r.alpha == alpha) return r;
  }
  throw ValidationError("report has no row for " +
                        std::string(MethodName(method)) + " at alpha " +
                        std::to_string(alpha));
}

namespace {

struct RawSplit {
  Matrix<double> features;
  Matrix<double> logits;
  std::vector<ClassIndex> labels;

  std::size_t size() const { return labels.size(); }
};

struct TrialInput {
  RawSplit train, val, test;
};

using TrialSource = std::function<TrialInput(std::uint64_t trial_seed)>;

LabeledSplit Finish(const RawSplit& raw, double T) {
  LabeledSplit s;
  s.features = raw.features;
  s.labels = raw.labels;
  s.probs = ApplyTemperature(raw.logits, T);
  return s;
}

bool Wants(const ExperimentConfig& c, Method m) {
  return std::find(c.methods.begin(), c.methods.end(), m) != c.methods.end();
}

void CheckPhases(const TrialInput& in, const ExperimentConfig& c) {
  if (in.test.size() == 0) {
    throw ValidationError("evaluation phase: test split is empty");
  }
  const bool calibrated =
      std::any_of(c.methods.begin(), c.methods.end(),
                  [](Method m) { return m != Method::kNaive; });
  if (calibrated && in.val.size() == 0) {
    throw ValidationError("calibration phase: validation split is empty");
  }
  if (c.temperature_scaling && in.val.size() < kMinTemperatureExamples) {
    throw ValidationError("temperature phase: validation split has " +
                          std::to_string(in.val.size()) + " rows, need " +
                          std::to_string(kMinTemperatureExamples));
  }
  if ((Wants(c, Method::kRaps) || Wants(c, Method::kRapsRandomized)) &&
      in.train.size() < kMinTuningExamples) {
    throw ValidationError("RAPS tuning phase: training split has " +
                          std::to_string(in.train.size()) + " rows, need " +
                          std::to_string(kMinTuningExamples));
  }
  if (Wants(c, Method::kCpsn) && in.train.size() == 0) {
    throw ValidationError("CPSN training phase: training split is empty");
  }
}

// Records for one trial, indexed [alpha][method].
std::vector<TrialRecord> RunTrial(const TrialInput& in,
                                  const ExperimentConfig& c,
                                  std::uint32_t trial,
                                  std::uint64_t trial_seed) {
  CheckPhases(in, c);
  std::optional<double> T;
  if (c.temperature_scaling) {
    T = FitTemperature(in.val.logits, in.val.labels).temperature;
  }
  const LabeledSplit train = Finish(in.train, T.value_or(1.0));
  const LabeledSplit val = Finish(in.val, T.value_or(1.0));
  const LabeledSplit test = Finish(in.test, T.value_or(1.0));

  std::optional<RegressorModel> regressor;
  if (Wants(c, Method::kCpsn)) {
    TrainConfig tc = c.train;
    tc.seed = DeriveSeed(trial_seed, "regressor");
    regressor = TrainPhase(train, tc).model;
  }

  std::vector<TrialRecord> out;
  for (double alpha : c.alphas) {
    std::optional<RapsParams> raps;
    if (Wants(c, Method::kRaps) || Wants(c, Method::kRapsRandomized)) {
      raps = TuneRaps(train, alpha, c.raps_grid, DeriveSeed(trial_seed, "raps"));
    }
    for (Method m : c.methods) {
      TrialRecord rec;
      rec.trial = trial;
      rec.seed = trial_seed;
      rec.n_test = test.size();
      rec.temperature = T;
      kernels::SetStats stats;
      if (m == Method::kCpsn) {
        const CpsnResiduals r =
            ComputeResiduals(*regressor, val, alpha, c.parallel_kernels);
        const CpsnConformalizer cz = ConformalizeFromResiduals(
            *regressor, r, alpha, static_cast<std::uint32_t>(val.num_classes()));
        stats = EvaluateCpsn(cz, test, c.parallel_kernels);
        rec.delta1 = cz.delta1;
        rec.delta2 = cz.delta2;
        rec.n1 = cz.n1;
        rec.n2 = cz.n2;
        rec.residuals = SummarizeResiduals(r);
      } else {
        const bool uses_raps = m == Method::kRaps || m == Method::kRapsRandomized;
        const CalibratedThreshold t =
            m == Method::kNaive
                ? NaiveThreshold(alpha)
                : Calibrate(val, alpha, m, uses_raps ? raps : std::nullopt,
                            DeriveSeed(trial_seed, MethodName(m)));
        stats = EvaluateThreshold(t, test, c.parallel_kernels);
        rec.q = t.q;
        if (uses_raps) rec.raps = raps;
      }
      rec.coverage = Coverage(stats);
      rec.avg_size = AvgSize(stats);
      out.push_back(std::move(rec));
    }
  }
  return out;
}

ExperimentReport RunTrials(const TrialSource& source, const ExperimentConfig& c,
                           const std::string& name) {
  c.Validate();
  const std::size_t n_trials = c.trials;
  std::vector<std::vector<TrialRecord>> results(n_trials);
  std::vector<std::exception_ptr> errors(n_trials);
  const int workers = c.workers > 0 ? c.workers : omp_get_max_threads();
  const auto n = static_cast<std::int64_t>(n_trials);
#pragma omp parallel for schedule(dynamic) num_threads(workers)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      const std::uint64_t trial_seed =
          DeriveSeed(c.seed, static_cast<std::uint64_t>(i));
      results[i] = RunTrial(source(trial_seed), c,
                            static_cast<std::uint32_t>(i), trial_seed);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (std::size_t i = 0; i < n_trials; ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const Error& e) {
      throw Error(e.kind(), "trial " + std::to_string(i) + ": " + e.what(),
                  e.code());
    }
  }

  ExperimentReport report;
  report.source = name;
  report.config = c;
  const std::size_t per_trial = c.alphas.size() * c.methods.size();
  for (std::size_t j = 0; j < per_trial; ++j) {
    EvalReport r;
    r.alpha = c.alphas[j / c.methods.size()];
    r.method = c.methods[j % c.methods.size()];
    std::vector<double> cov, size, d1, d2;
    for (std::size_t t = 0; t < n_trials; ++t) {
      const TrialRecord& rec = results[t][j];
      r.records.push_back(rec);
      cov.push_back(rec.coverage);
      size.push_back(rec.avg_size);
      if (rec.delta1) d1.push_back(*rec.delta1);
      if (rec.delta2) d2.push_back(*rec.delta2);
    }
    r.n_test = r.records.front().n_test;
    r.coverage = SummarizeFinite(cov);
    r.size = SummarizeFinite(size);
    const double m = r.coverage.mean;
    const double total = static_cast<double>(n_trials) *
                         static_cast<double>(r.n_test);
    r.coverage_se_binomial = std::sqrt(m * (1.0 - m) / total);
    r.coverage_se_trials =
        r.coverage.std / std::sqrt(static_cast<double>(n_trials));
    if (r.method == Method::kCpsn) {
      r.delta1 = SummarizeFinite(d1);
      r.delta2 = SummarizeFinite(d2);
    }
    report.reports.push_back(std::move(r));
  }
  return report;
}

RawSplit Slice(const SyntheticData& data, std::size_t begin, std::size_t count) {
  std::vector<std::size_t> rows(count);
  for (std::size_t i = 0; i < count; ++i) rows[i] = begin + i;
  RawSplit s;
  s.features = data.features.Gather(rows);
  s.logits = data.logits.Gather(rows);
  s.labels.assign(data.labels.begin() + static_cast<std::ptrdiff_t>(begin),
                  data.labels.begin() + static_cast<std::ptrdiff_t>(begin + count));
  return s;
}

}  // namespace

ExperimentReport RunSyntheticExperiment(const SyntheticTask& task,
                                        const ExperimentConfig& config) {
  task.Validate();
  const TrialSource source = [&](std::uint64_t trial_seed) {
    const std::size_t total = config.n_train + config.n_val + config.n_test;
    const SyntheticData data =
        GenerateSynthetic(task, total, DeriveSeed(trial_seed, "data"));
    TrialInput in;
    in.train = Slice(data, 0, config.n_train);
    in.val = Slice(data, config.n_train, config.n_val);
    in.test = Slice(data, config.n_train + config.n_val, config.n_test);
    return in;
  };
  return RunTrials(source, config, "synthetic");
}

ExperimentReport RunDatasetExperiment(const Dataset& dataset,
                                      const ExperimentConfig& config) {
  dataset.Validate();
  const Matrix<double> logits = ScoresAsLogits(dataset);
  Matrix<double> features(dataset.features.rows(), dataset.features.cols());
  std::copy(dataset.features.data().begin(), dataset.features.data().end(),
            features.data().begin());
  const TrialSource source = [&](std::uint64_t trial_seed) {
    const SplitIndices idx =
        SplitDataset(dataset.labels.size(), config.fractions, trial_seed);
    auto take = [&](const std::vector<std::size_t>& rows) {
      RawSplit s;
      s.features = features.Gather(rows);
      s.logits = logits.Gather(rows);
      for (std::size_t r : rows) s.labels.push_back(dataset.labels[r]);
      return s;
    };
    TrialInput in;
    in.train = take(idx.train);
    in.val = take(idx.val);
    in.test = take(idx.test);
    return in;
  };
  return RunTrials(source, config, dataset.manifest.name);
}

}  // namespace cptk
