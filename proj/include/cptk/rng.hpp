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

// Seeded randomness.
//
// Every stochastic stage derives its own seed from the global seed and a
// stage name, so adding draws to one stage never perturbs another. Per-sample
// uniforms are counter based (seed, ordinal) and do not depend on evaluation
// order, which keeps parallel kernels bit-identical to the serial ones.
//
// The distributions below are written out by hand instead of using
// <random>'s distributions, whose output is implementation-defined.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace cptk {

constexpr std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// FNV-1a over the stage name, mixed into the seed.
constexpr std::uint64_t DeriveSeed(std::uint64_t seed, std::string_view stage) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : stage) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return SplitMix64(seed ^ SplitMix64(h));
}

constexpr std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t index) {
  return SplitMix64(seed ^ SplitMix64(index + 0x632BE59BD9B4E019ULL));
}

/// Maps 64 random bits to a double in [0, 1).
constexpr double BitsToUnit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Uniform draw in [0, 1) keyed by (seed, ordinal).
constexpr double UniformAt(std::uint64_t seed, std::uint64_t ordinal) {
  return BitsToUnit(DeriveSeed(seed, ordinal));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t NextBits() { return engine_(); }

  double Uniform() { return BitsToUnit(engine_()); }

  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  /// Uniform integer in [0, n) by rejection, n > 0.
  std::uint64_t UniformIndex(std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return r % n;
  }

  /// Standard normal (Box-Muller, both outputs used).
  double Normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = Uniform();
    } while (u1 <= 0.0);
    const double u2 = Uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  template <typename T>
  void Shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const std::size_t j = UniformIndex(i);
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace cptk
