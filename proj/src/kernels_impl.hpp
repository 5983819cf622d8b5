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

#pragma once

#include <cstdint>
#include <optional>

#include "cptk/kernels.hpp"

namespace cptk::kernels::detail {

// Per-sample bodies shared by the serial and OpenMP loops.
double ScoreOne(const ProbabilityVector& p, ClassIndex y, const ScoreSpec& spec,
                double u, std::optional<double> top_label_value);

void EvaluateOne(const ProbabilityVector& p, ClassIndex y, const SetSpec& spec,
                 double threshold, double u, std::uint32_t& size,
                 std::uint8_t& covered);

}  // namespace cptk::kernels::detail
