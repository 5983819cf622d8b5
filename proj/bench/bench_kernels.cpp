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

// Serial reference loops vs their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <vector>

#include "cptk/eval.hpp"
#include "cptk/kernels.hpp"
#include "cptk/regressor.hpp"

namespace {

using namespace cptk;

struct Fixture {
  LabeledSplit split;
  std::vector<double> u;
  RegressorModel model;
};

const Fixture& GetFixture(std::size_t n) {
  static std::vector<std::pair<std::size_t, Fixture>> cache;
  for (const auto& [size, f] : cache) {
    if (size == n) return f;
  }
  SyntheticTask task;
  task.seed = 11;
  const SyntheticData data = GenerateSynthetic(task, n);
  Fixture f;
  f.split = data.ToSplit();
  f.u.resize(n);
  for (std::size_t i = 0; i < n; ++i) f.u[i] = (i % 997) / 997.0;
  f.model = RegressorModel::Initialize(task.d, 256, 3);
  cache.emplace_back(n, std::move(f));
  return cache.back().second;
}

ScoreSpec RandRaps() {
  ScoreSpec s;
  s.family = ScoreFamily::kRaps;
  s.randomized = true;
  s.raps = {0.01, 2};
  return s;
}

template <bool kParallel>
void BM_ConformalScores(benchmark::State& state) {
  const Fixture& f = GetFixture(static_cast<std::size_t>(state.range(0)));
  std::vector<double> out(f.split.size());
  const ScoreSpec spec = RandRaps();
  for (auto _ : state) {
    if constexpr (kParallel) {
      kernels::parallel::ConformalScores(f.split.probs, f.split.labels, spec,
                                         f.u, 0.0, out);
    } else {
      kernels::serial::ConformalScores(f.split.probs, f.split.labels, spec, f.u,
                                       0.0, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool kParallel>
void BM_EvaluateSets(benchmark::State& state) {
  const Fixture& f = GetFixture(static_cast<std::size_t>(state.range(0)));
  kernels::SetSpec spec;
  spec.rule = kernels::SetRule::kScoreAtMost;
  spec.score = RandRaps();
  const double q = 0.9;
  kernels::SetStats stats;
  for (auto _ : state) {
    if constexpr (kParallel) {
      kernels::parallel::EvaluateSets(f.split.probs, f.split.labels, spec,
                                      {&q, 1}, f.u, stats);
    } else {
      kernels::serial::EvaluateSets(f.split.probs, f.split.labels, spec, {&q, 1},
                                    f.u, stats);
    }
    benchmark::DoNotOptimize(stats.sizes.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool kParallel>
void BM_Forward(benchmark::State& state) {
  const Fixture& f = GetFixture(static_cast<std::size_t>(state.range(0)));
  std::vector<double> out(f.split.size());
  for (auto _ : state) {
    if constexpr (kParallel) {
      kernels::parallel::Forward(f.model, f.split.features, out);
    } else {
      kernels::serial::Forward(f.model, f.split.features, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

BENCHMARK(BM_ConformalScores<false>)->Name("ConformalScores/serial")->Arg(1000)->Arg(20000);
BENCHMARK(BM_ConformalScores<true>)->Name("ConformalScores/omp")->Arg(1000)->Arg(20000);
BENCHMARK(BM_EvaluateSets<false>)->Name("EvaluateSets/serial")->Arg(1000)->Arg(20000);
BENCHMARK(BM_EvaluateSets<true>)->Name("EvaluateSets/omp")->Arg(1000)->Arg(20000);
BENCHMARK(BM_Forward<false>)->Name("Forward/serial")->Arg(1000)->Arg(20000);
BENCHMARK(BM_Forward<true>)->Name("Forward/omp")->Arg(1000)->Arg(20000);

}  // namespace

BENCHMARK_MAIN();
