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

#include <cmath>
#include <vector>

#include "cptk/error.hpp"
#include "cptk/regressor.hpp"
#include "cptk/rng.hpp"
#include "test_util.hpp"

namespace cptk {
namespace {

std::vector<double*> Params(RegressorModel& m) {
  std::vector<double*> out;
  for (double& v : m.w1) out.push_back(&v);
  for (double& v : m.b1) out.push_back(&v);
  for (double& v : m.w2) out.push_back(&v);
  out.push_back(&m.b2);
  return out;
}

Matrix<double> RandomMatrix(Rng& rng, std::size_t n, std::size_t d) {
  Matrix<double> x(n, d);
  for (double& v : x.data()) v = rng.Normal();
  return x;
}

TEST(ForwardTest, Examples) {
  auto zero = RegressorModel::Zeros(3, 4);
  zero.b2 = 0.3;
  const std::vector<double> x{1.0, -5.0, 2.0};
  EXPECT_DOUBLE_EQ(Forward(zero, x), 0.3);

  auto m = RegressorModel::Zeros(1, 1);
  m.w1 = {1.0};
  m.w2 = {1.0};
  EXPECT_DOUBLE_EQ(Forward(m, std::vector<double>{-2.0}), 0.0);
  EXPECT_DOUBLE_EQ(Forward(m, std::vector<double>{2.0}), 2.0);
  EXPECT_THROW(Forward(m, std::vector<double>{1.0, 2.0}), Error);
}

TEST(LossAndGradTest, Examples) {
  Rng rng(1);
  const auto model = RegressorModel::Initialize(4, 5, 2);
  const auto x = RandomMatrix(rng, 6, 4);
  std::vector<double> targets(6);
  for (std::size_t i = 0; i < 6; ++i) targets[i] = Forward(model, x.row(i));
  const auto lg = ComputeLossAndGrad(model, x, targets);
  EXPECT_EQ(lg.loss, 0.0);
  auto grad = lg.grad;
  for (double* p : Params(grad)) EXPECT_EQ(*p, 0.0);

  const auto zero = RegressorModel::Zeros(2, 3);
  const Matrix<double> one(1, 2, std::vector<double>{0.5, -0.5});
  const std::vector<double> target{1.0};
  const auto g = ComputeLossAndGrad(zero, one, target);
  EXPECT_DOUBLE_EQ(g.loss, 1.0);
  EXPECT_DOUBLE_EQ(g.grad.b2, -2.0);
}

// Central differences, step 1e-5, relative error 1e-4.
TEST(LossAndGradTest, MatchesFiniteDifferences) {
  Rng rng(2);
  for (int c = 0; c < 20; ++c) {
    const auto d = static_cast<std::uint32_t>(1 + rng.UniformIndex(6));
    const auto h = static_cast<std::uint32_t>(1 + rng.UniformIndex(6));
    const std::size_t n = 1 + rng.UniformIndex(10);
    auto model = RegressorModel::Initialize(d, h, 100 + c);
    const auto x = RandomMatrix(rng, n, d);
    std::vector<double> t(n);
    for (double& v : t) v = rng.Uniform();
    const auto analytic = ComputeLossAndGrad(model, x, t).grad;
    auto grad = analytic;
    const auto gp = Params(grad);
    const auto mp = Params(model);
    for (std::size_t i = 0; i < mp.size(); ++i) {
      const double saved = *mp[i];
      *mp[i] = saved + 1e-5;
      const double up = ComputeLossAndGrad(model, x, t).loss;
      *mp[i] = saved - 1e-5;
      const double down = ComputeLossAndGrad(model, x, t).loss;
      *mp[i] = saved;
      const double numeric = (up - down) / 2e-5;
      const double scale = std::max({std::abs(numeric), std::abs(*gp[i]), 1e-3});
      EXPECT_LE(std::abs(numeric - *gp[i]) / scale, 1e-4)
          << "config " << c << " parameter " << i;
    }
  }
}

TEST(TrainTest, ZeroEpochsReturnsInitialModel) {
  Rng rng(3);
  const auto x = RandomMatrix(rng, 20, 3);
  const std::vector<double> t(20, 0.5);
  TrainConfig config;
  config.epochs = 0;
  config.hidden_width = 8;
  config.seed = 4;
  const auto r = Train(x, t, config);
  EXPECT_EQ(r.model, RegressorModel::Initialize(3, 8, 4));
  EXPECT_TRUE(r.epoch_loss.empty());
}

TEST(TrainTest, ConstantTarget) {
  Rng rng(5);
  const auto x = RandomMatrix(rng, 200, 4);
  const std::vector<double> t(200, 0.37);
  TrainConfig config;
  config.epochs = 300;
  config.learning_rate = 5e-3;
  config.hidden_width = 16;
  config.batch_size = 32;
  const auto r = Train(x, t, config);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    EXPECT_NEAR(Forward(r.model, x.row(i)), 0.37, 0.01);
  }
}

TEST(TrainTest, TeacherStudent) {
  Rng rng(6);
  const std::size_t n = 500;
  const auto x = RandomMatrix(rng, n, 2);
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = x(i, 0), b = x(i, 1);
    t[i] = 0.3 * a - 0.2 * b + 0.5 * std::max(0.0, a + b);
  }
  TrainConfig config;
  config.epochs = 400;
  config.learning_rate = 3e-3;
  config.hidden_width = 32;
  config.batch_size = 50;
  config.weight_decay = 0.0;
  const auto r = Train(x, t, config);
  EXPECT_LE(ComputeLossAndGrad(r.model, x, t).loss, 1e-3);
  // The epoch loss settles instead of drifting upward.
  for (std::size_t e = 50; e < r.epoch_loss.size(); e += 50) {
    EXPECT_LE(r.epoch_loss[e], r.epoch_loss[5] + 1e-12);
  }
}

TEST(TrainTest, Deterministic) {
  Rng rng(7);
  const auto x = RandomMatrix(rng, 100, 5);
  std::vector<double> t(100);
  for (double& v : t) v = rng.Uniform();
  TrainConfig config;
  config.epochs = 5;
  config.hidden_width = 16;
  config.seed = 11;
  EXPECT_EQ(Train(x, t, config).model, Train(x, t, config).model);
  auto other = config;
  other.seed = 12;
  EXPECT_NE(Train(x, t, config).model, Train(x, t, other).model);
}

TEST(TrainTest, Errors) {
  TrainConfig config;
  EXPECT_THROW(Train(Matrix<double>(0, 3), {}, config), Error);
  const Matrix<double> x(2, 1, std::vector<double>{1.0, 2.0});
  EXPECT_THROW(Train(x, std::vector<double>{1.0}, config), Error);
  config.learning_rate = 0.0;
  EXPECT_THROW(Train(x, std::vector<double>{1.0, 1.0}, config), Error);
  config.learning_rate = 0.1;
  config.hidden_width = 4;
  try {
    Train(x, std::vector<double>{NAN, 1.0}, config);
    FAIL() << "expected numerical error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumerical);
    EXPECT_NE(std::string(e.what()).find("learning rate"), std::string::npos);
  }
}

TEST(AdamWTest, PureDecayStep) {
  TrainConfig config;
  config.learning_rate = 1e-3;
  config.weight_decay = 0.25;
  auto model = RegressorModel::Initialize(3, 4, 9);
  const auto before = model;
  AdamW opt(config, model);
  opt.Step(model, RegressorModel::Zeros(3, 4));
  const double factor = 1.0 - config.learning_rate * config.weight_decay;
  auto b = before;
  const auto bp = Params(b);
  const auto mp = Params(model);
  for (std::size_t i = 0; i < mp.size(); ++i) {
    EXPECT_EQ(*mp[i], *bp[i] * factor);
  }
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(AdamWTest, FirstStepMovesByLearningRate) {
  TrainConfig config;
  config.learning_rate = 1e-2;
  config.weight_decay = 0.0;
  auto model = RegressorModel::Zeros(1, 1);
  auto grad = RegressorModel::Zeros(1, 1);
  grad.b2 = 3.0;
  AdamW opt(config, model);
  opt.Step(model, grad);
  EXPECT_NEAR(model.b2, -1e-2, 1e-9);
}

TEST(ModelBlobTest, RoundTripAndCorruption) {
  const auto model = RegressorModel::Initialize(5, 7, 3);
  const auto bytes = EncodeModel(model);
  EXPECT_EQ(bytes.size(), 8 + 8 + 8 * model.num_parameters());
  EXPECT_EQ(DecodeModel(bytes), model);

  auto bad = bytes;
  bad[0] = 'X';
  try {
    DecodeModel(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), DataErrorCode::kBadMagic);
  }
  auto truncated = bytes;
  truncated.pop_back();
  try {
    DecodeModel(truncated);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), DataErrorCode::kTruncated);
  }
  auto longer = bytes;
  longer.push_back(0);
  EXPECT_THROW(DecodeModel(longer), Error);

  testing::TempDir dir;
  SaveModel(dir.path() / "m.bin", model);
  EXPECT_EQ(LoadModel(dir.path() / "m.bin"), model);
  EXPECT_THROW(LoadModel(dir.path() / "missing.bin"), Error);
}

TEST(TrainConfigTest, JsonRoundTrip) {
  TrainConfig c;
  c.learning_rate = 1e-3;
  c.epochs = 30;
  c.hidden_width = 64;
  c.seed = 123456789012345ULL;
  EXPECT_EQ(TrainConfigFromJson(TrainConfigToJson(c)), c);
}

TEST(InitializeTest, WithinFanInBounds) {
  const auto m = RegressorModel::Initialize(16, 9, 1);
  for (double v : m.w1) EXPECT_LE(std::abs(v), 0.25);
  for (double v : m.w2) EXPECT_LE(std::abs(v), 1.0 / 3.0);
  EXPECT_NO_THROW(m.Validate());
  auto broken = m;
  broken.w2.pop_back();
  EXPECT_THROW(broken.Validate(), Error);
}

}  // namespace
}  // namespace cptk
