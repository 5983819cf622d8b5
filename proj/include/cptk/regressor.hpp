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

// Threshold regressor: one hidden ReLU layer and a linear scalar output,
// trained on squared error with AdamW.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cptk/matrix.hpp"

namespace cptk {

/// q(x) = b2 + w2 . relu(W1^T x + b1). Also used as the gradient container.
struct RegressorModel {
  std::uint32_t input_dim = 0;
  std::uint32_t hidden_dim = 0;
  std::vector<double> w1;  // input_dim x hidden_dim, row-major
  std::vector<double> b1;  // hidden_dim
  std::vector<double> w2;  // hidden_dim
  double b2 = 0.0;

  static RegressorModel Zeros(std::uint32_t input_dim, std::uint32_t hidden_dim);

  /// Uniform in +-1/sqrt(fan_in) per layer.
  static RegressorModel Initialize(std::uint32_t input_dim,
                                   std::uint32_t hidden_dim,
                                   std::uint64_t seed);

  std::size_t num_parameters() const noexcept {
    return w1.size() + b1.size() + w2.size() + 1;
  }

  /// Throws on inconsistent sizes or non-finite parameters.
  void Validate() const;

  friend bool operator==(const RegressorModel&, const RegressorModel&) = default;
};

double Forward(const RegressorModel& model, std::span<const double> x);

struct LossAndGrad {
  double loss = 0.0;  // mean squared error over the batch
  RegressorModel grad;
};

/// MSE and its exact gradient over `rows` of (features, targets).
LossAndGrad ComputeLossAndGrad(const RegressorModel& model,
                               const Matrix<double>& features,
                               std::span<const double> targets,
                               std::span<const std::size_t> rows);

/// Convenience overload over every row.
LossAndGrad ComputeLossAndGrad(const RegressorModel& model,
                               const Matrix<double>& features,
                               std::span<const double> targets);

struct TrainConfig {
  double learning_rate = 5e-4;
  double weight_decay = 1e-6;
  std::uint32_t batch_size = 128;
  std::uint32_t epochs = 100;
  std::uint32_t hidden_width = 256;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void Validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Adam with decoupled weight decay:
///   theta <- theta * (1 - lr * wd)
///   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
class AdamW {
 public:
  AdamW(const TrainConfig& config, const RegressorModel& shape);

  void Step(RegressorModel& params, const RegressorModel& grad);

  std::uint64_t steps() const noexcept { return step_; }

 private:
  void Update(std::span<double> param, std::span<const double> grad,
              std::span<double> m, std::span<double> v) const;

  double lr_, beta1_, beta2_, eps_, wd_;
  double bias1_ = 1.0, bias2_ = 1.0;
  std::uint64_t step_ = 0;
  RegressorModel m_, v_;
};

struct TrainResult {
  RegressorModel model;
  std::vector<double> epoch_loss;  // mean squared error seen during each epoch
};

/// Seeded mini-batch training. Throws a numerical error on a non-finite loss.
TrainResult Train(const Matrix<double>& features,
                  std::span<const double> targets, const TrainConfig& config);

// --- Serialisation ----------------------------------------------------------
// Blob: "CPTKMLP1", u32 d, u32 h, then w1, b1, w2, b2 as little-endian f64.

std::vector<std::uint8_t> EncodeModel(const RegressorModel& model);
RegressorModel DecodeModel(std::span<const std::uint8_t> bytes);

void SaveModel(const std::filesystem::path& path, const RegressorModel& model);
RegressorModel LoadModel(const std::filesystem::path& path);

std::string TrainConfigToJson(const TrainConfig& config);
TrainConfig TrainConfigFromJson(const std::string& text);

}  // namespace cptk
