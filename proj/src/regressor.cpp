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

#include "cptk/regressor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cptk/error.hpp"
#include "cptk/rng.hpp"
#include "json.hpp"

namespace cptk {

RegressorModel RegressorModel::Zeros(std::uint32_t input_dim,
                                     std::uint32_t hidden_dim) {
  RegressorModel m;
  m.input_dim = input_dim;
  m.hidden_dim = hidden_dim;
  m.w1.assign(std::size_t{input_dim} * hidden_dim, 0.0);
  m.b1.assign(hidden_dim, 0.0);
  m.w2.assign(hidden_dim, 0.0);
  m.b2 = 0.0;
  return m;
}

RegressorModel RegressorModel::Initialize(std::uint32_t input_dim,
                                          std::uint32_t hidden_dim,
                                          std::uint64_t seed) {
  if (input_dim == 0 || hidden_dim == 0) {
    throw ValidationError("regressor dimensions must be positive");
  }
  RegressorModel m = Zeros(input_dim, hidden_dim);
  Rng rng(DeriveSeed(seed, "regressor-init"));
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  for (double& w : m.w1) w = rng.Uniform(-bound1, bound1);
  for (double& b : m.b1) b = rng.Uniform(-bound1, bound1);
  for (double& w : m.w2) w = rng.Uniform(-bound2, bound2);
  m.b2 = rng.Uniform(-bound2, bound2);
  return m;
}

void RegressorModel::Validate() const {
  if (w1.size() != std::size_t{input_dim} * hidden_dim ||
      b1.size() != hidden_dim || w2.size() != hidden_dim) {
    throw ShapeError("regressor parameter sizes do not match d=" +
                     std::to_string(input_dim) +
                     ", h=" + std::to_string(hidden_dim));
  }
  auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(),
                       [](double x) { return std::isfinite(x); });
  };
  if (!finite(w1) || !finite(b1) || !finite(w2) || !std::isfinite(b2)) {
    throw NumericalError("regressor has non-finite parameters");
  }
}

namespace {

void CheckInput(const RegressorModel& model, std::size_t dim) {
  if (dim != model.input_dim) {
    throw ShapeError("feature dimension " + std::to_string(dim) +
                     " does not match regressor input " +
                     std::to_string(model.input_dim));
  }
}

// Hidden pre-activations for one input.
void HiddenPreactivation(const RegressorModel& m, std::span<const double> x,
                         std::span<double> z) {
  const std::size_t h = m.hidden_dim;
  std::copy(m.b1.begin(), m.b1.end(), z.begin());
  for (std::size_t i = 0; i < m.input_dim; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* w = m.w1.data() + i * h;
    for (std::size_t j = 0; j < h; ++j) z[j] += xi * w[j];
  }
}

}  // namespace

double Forward(const RegressorModel& model, std::span<const double> x) {
  CheckInput(model, x.size());
  std::vector<double> z(model.hidden_dim);
  HiddenPreactivation(model, x, z);
  double out = model.b2;
  for (std::size_t j = 0; j < model.hidden_dim; ++j) {
    out += model.w2[j] * std::max(z[j], 0.0);
  }
  return out;
}

LossAndGrad ComputeLossAndGrad(const RegressorModel& model,
                               const Matrix<double>& features,
                               std::span<const double> targets,
                               std::span<const std::size_t> rows) {
  if (rows.empty()) throw ValidationError("loss over an empty batch");
  CheckInput(model, features.cols());
  if (targets.size() != features.rows()) {
    throw ShapeError("targets and features disagree on row count");
  }
  const std::size_t h = model.hidden_dim;
  LossAndGrad out{0.0, RegressorModel::Zeros(model.input_dim, model.hidden_dim)};
  RegressorModel& g = out.grad;
  std::vector<double> z(h), dz(h);
  const double scale = 2.0 / static_cast<double>(rows.size());
  for (std::size_t r : rows) {
    auto x = features.row(r);
    HiddenPreactivation(model, x, z);
    double pred = model.b2;
    for (std::size_t j = 0; j < h; ++j) pred += model.w2[j] * std::max(z[j], 0.0);
    const double err = pred - targets[r];
    out.loss += err * err;

    const double dout = scale * err;
    g.b2 += dout;
    for (std::size_t j = 0; j < h; ++j) {
      const bool active = z[j] > 0.0;
      g.w2[j] += dout * (active ? z[j] : 0.0);
      dz[j] = active ? dout * model.w2[j] : 0.0;
      g.b1[j] += dz[j];
    }
    for (std::size_t i = 0; i < model.input_dim; ++i) {
      const double xi = x[i];
      if (xi == 0.0) continue;
      double* gw = g.w1.data() + i * h;
      for (std::size_t j = 0; j < h; ++j) gw[j] += xi * dz[j];
    }
  }
  out.loss /= static_cast<double>(rows.size());
  return out;
}

LossAndGrad ComputeLossAndGrad(const RegressorModel& model,
                               const Matrix<double>& features,
                               std::span<const double> targets) {
  std::vector<std::size_t> rows(features.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return ComputeLossAndGrad(model, features, targets, rows);
}

void TrainConfig::Validate() const {
  if (!(learning_rate > 0.0 && learning_rate < 1.0)) {
    throw ValidationError("learning_rate must be in (0, 1)");
  }
  if (!(weight_decay >= 0.0)) {
    throw ValidationError("weight_decay must be >= 0");
  }
  if (batch_size == 0) throw ValidationError("batch_size must be positive");
  if (hidden_width == 0) throw ValidationError("hidden_width must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ValidationError("moment decay rates must be in (0, 1)");
  }
  if (!(epsilon > 0.0)) throw ValidationError("epsilon must be positive");
}

AdamW::AdamW(const TrainConfig& config, const RegressorModel& shape)
    : lr_(config.learning_rate),
      beta1_(config.beta1),
      beta2_(config.beta2),
      eps_(config.epsilon),
      wd_(config.weight_decay),
      m_(RegressorModel::Zeros(shape.input_dim, shape.hidden_dim)),
      v_(RegressorModel::Zeros(shape.input_dim, shape.hidden_dim)) {}

void AdamW::Update(std::span<double> param, std::span<const double> grad,
                   std::span<double> m, std::span<double> v) const {
  const double decay = 1.0 - lr_ * wd_;
  const double c1 = 1.0 / (1.0 - bias1_);
  const double c2 = 1.0 / (1.0 - bias2_);
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = beta1_ * m[i] + (1.0 - beta1_) * grad[i];
    v[i] = beta2_ * v[i] + (1.0 - beta2_) * grad[i] * grad[i];
    param[i] *= decay;
    param[i] -= lr_ * (m[i] * c1) / (std::sqrt(v[i] * c2) + eps_);
  }
}

void AdamW::Step(RegressorModel& params, const RegressorModel& grad) {
  ++step_;
  bias1_ *= beta1_;
  bias2_ *= beta2_;
  Update(params.w1, grad.w1, m_.w1, v_.w1);
  Update(params.b1, grad.b1, m_.b1, v_.b1);
  Update(params.w2, grad.w2, m_.w2, v_.w2);
  Update({&params.b2, 1}, {&grad.b2, 1}, {&m_.b2, 1}, {&v_.b2, 1});
}

TrainResult Train(const Matrix<double>& features,
                  std::span<const double> targets, const TrainConfig& config) {
  config.Validate();
  const std::size_t n = features.rows();
  if (n == 0) throw ValidationError("cannot train on an empty dataset");
  if (targets.size() != n) {
    throw ShapeError("targets and features disagree on row count");
  }
  TrainResult result;
  result.model = RegressorModel::Initialize(
      static_cast<std::uint32_t>(features.cols()), config.hidden_width,
      config.seed);
  AdamW optimizer(config, result.model);
  Rng shuffle_rng(DeriveSeed(config.seed, "regressor-shuffle"));

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  const std::size_t batch = config.batch_size;
  for (std::uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.Shuffle(std::span<std::size_t>(perm));
    double sse = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      std::span<const std::size_t> rows(perm.data() + start, stop - start);
      LossAndGrad lg = ComputeLossAndGrad(result.model, features, targets, rows);
      if (!std::isfinite(lg.loss)) {
        std::ostringstream msg;
        msg << "non-finite training loss at epoch " << epoch
            << "; try a smaller learning rate (current "
            << config.learning_rate << ")";
        throw NumericalError(msg.str());
      }
      sse += lg.loss * static_cast<double>(rows.size());
      optimizer.Step(result.model, lg.grad);
    }
    result.epoch_loss.push_back(sse / static_cast<double>(n));
  }
  return result;
}

// --- Serialisation ----------------------------------------------------------

namespace {

constexpr char kModelMagic[8] = {'C', 'P', 'T', 'K', 'M', 'L', 'P', '1'};

void PutU32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void PutF64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t U32() {
    Need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_++]} << (8 * i);
    return v;
  }

  double F64() {
    Need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_++]} << (8 * i);
    return std::bit_cast<double>(v);
  }

  void Need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw DataError(DataErrorCode::kTruncated, "regressor blob is truncated");
    }
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  void Skip(std::size_t n) { Need(n); pos_ += n; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> EncodeModel(const RegressorModel& model) {
  model.Validate();
  std::vector<std::uint8_t> out(std::begin(kModelMagic), std::end(kModelMagic));
  out.reserve(16 + 8 * model.num_parameters());
  PutU32(out, model.input_dim);
  PutU32(out, model.hidden_dim);
  for (double v : model.w1) PutF64(out, v);
  for (double v : model.b1) PutF64(out, v);
  for (double v : model.w2) PutF64(out, v);
  PutF64(out, model.b2);
  return out;
}

RegressorModel DecodeModel(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kModelMagic) ||
      std::memcmp(bytes.data(), kModelMagic, sizeof(kModelMagic)) != 0) {
    throw DataError(DataErrorCode::kBadMagic, "not a CPTKMLP1 regressor blob");
  }
  Reader in(bytes);
  in.Skip(sizeof(kModelMagic));
  const std::uint32_t d = in.U32();
  const std::uint32_t h = in.U32();
  const std::size_t expected =
      8 * (std::size_t{d} * h + 2 * std::size_t{h} + 1);
  if (in.remaining() < expected) {
    throw DataError(DataErrorCode::kTruncated,
                    "regressor blob is truncated for d=" + std::to_string(d) +
                        ", h=" + std::to_string(h));
  }
  if (in.remaining() != expected) {
    throw DataError(DataErrorCode::kBadDimensions,
                    "regressor blob size does not match d=" + std::to_string(d) +
                        ", h=" + std::to_string(h));
  }
  RegressorModel m = RegressorModel::Zeros(d, h);
  for (double& v : m.w1) v = in.F64();
  for (double& v : m.b1) v = in.F64();
  for (double& v : m.w2) v = in.F64();
  m.b2 = in.F64();
  return m;
}

void SaveModel(const std::filesystem::path& path, const RegressorModel& model) {
  const auto bytes = EncodeModel(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

RegressorModel LoadModel(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return DecodeModel(bytes);
}

std::string TrainConfigToJson(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["format"] = "cptk-train-config";
  j["version"] = 1;
  j["learning_rate"] = c.learning_rate;
  j["weight_decay"] = c.weight_decay;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["hidden_width"] = c.hidden_width;
  j["seed"] = c.seed;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["epsilon"] = c.epsilon;
  return j.dump(2);
}

TrainConfig TrainConfigFromJson(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format") != "cptk-train-config" || j.at("version") != 1) {
      throw DataError(DataErrorCode::kBadVersion,
                      "unsupported train-config document");
    }
    TrainConfig c;
    c.learning_rate = j.at("learning_rate").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.batch_size = j.at("batch_size").get<std::uint32_t>();
    c.epochs = j.at("epochs").get<std::uint32_t>();
    c.hidden_width = j.at("hidden_width").get<std::uint32_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.epsilon = j.at("epsilon").get<double>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(DataErrorCode::kBadManifest,
                    std::string("malformed train config: ") + e.what());
  }
}

}  // namespace cptk
