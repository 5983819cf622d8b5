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

#include "cptk/tempscale.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cptk/error.hpp"

namespace cptk {

namespace {

void CheckTemperature(double T) {
  if (!(T > 0.0) || !std::isfinite(T)) {
    throw ValidationError("temperature must be positive and finite, got " +
                          std::to_string(T));
  }
}

void CheckLogits(std::span<const double> logits) {
  if (logits.size() < 2) throw ValidationError("need at least 2 logits");
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!std::isfinite(logits[i])) {
      throw ValidationError("logit " + std::to_string(i) + " is not finite");
    }
  }
}

}  // namespace

ProbabilityVector ApplyTemperature(std::span<const double> logits, double T) {
  CheckTemperature(T);
  CheckLogits(logits);
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp((logits[i] - m) / T);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return ProbabilityVector::FromValues(p);
}

std::vector<ProbabilityVector> ApplyTemperature(const Matrix<double>& logits,
                                                double T) {
  std::vector<ProbabilityVector> out;
  out.reserve(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    out.push_back(ApplyTemperature(logits.row(i), T));
  }
  return out;
}

double NegativeLogLikelihood(const Matrix<double>& logits,
                             std::span<const ClassIndex> labels, double T) {
  CheckTemperature(T);
  if (labels.size() != logits.rows()) {
    throw ShapeError("logit rows and labels differ in length");
  }
  if (labels.empty()) throw ValidationError("NLL of an empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto z = logits.row(i);
    if (labels[i] >= z.size()) {
      throw ValidationError("label " + std::to_string(labels[i]) +
                            " out of range");
    }
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp((v - m) / T);
    total += std::log(s) - (z[labels[i]] - m) / T;
  }
  return total / static_cast<double>(logits.rows());
}

TemperatureModel FitTemperature(const Matrix<double>& logits,
                                std::span<const ClassIndex> labels,
                                const TemperatureSearch& search) {
  if (logits.rows() < kMinTemperatureExamples) {
    throw ValidationError("temperature fit needs at least " +
                          std::to_string(kMinTemperatureExamples) +
                          " examples, got " + std::to_string(logits.rows()));
  }
  if (labels.size() != logits.rows()) {
    throw ShapeError("logit rows and labels differ in length");
  }
  if (!(search.lower > 0.0 && search.lower < search.upper &&
        search.tolerance > 0.0)) {
    throw ValidationError("invalid temperature search interval");
  }
  for (std::size_t i = 0; i < logits.rows(); ++i) CheckLogits(logits.row(i));
  if (std::all_of(labels.begin(), labels.end(),
                  [&](ClassIndex y) { return y == labels.front(); })) {
    throw ValidationError(
        "temperature fit needs labels from more than one class");
  }

  auto f = [&](double T) { return NegativeLogLikelihood(logits, labels, T); };
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = search.lower, b = search.upper;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > search.tolerance) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  TemperatureModel model;
  model.temperature = 0.5 * (a + b);
  model.nll = f(model.temperature);
  model.nll_at_one = f(1.0);
  if (search.lower <= 1.0 && search.upper >= 1.0 &&
      model.nll_at_one <= model.nll) {
    model.temperature = 1.0;
    model.nll = model.nll_at_one;
  }
  if (!std::isfinite(model.nll)) {
    throw NumericalError("temperature fit produced a non-finite NLL");
  }
  return model;
}

Matrix<double> LogProbabilities(std::span<const ProbabilityVector> probs) {
  if (probs.empty()) return {};
  const std::size_t k = probs.front().size();
  Matrix<double> out(probs.size(), k);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i].size() != k) throw ShapeError("inconsistent class count");
    for (std::size_t j = 0; j < k; ++j) {
      out(i, j) = std::log(std::max(probs[i][j], 1e-300));
    }
  }
  return out;
}

}  // namespace cptk
