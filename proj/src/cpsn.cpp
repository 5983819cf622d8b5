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

#include "cptk/cpsn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cptk/conformal.hpp"
#include "cptk/dataio.hpp"
#include "cptk/error.hpp"
#include "json_util.hpp"

namespace cptk {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

const ScoreSpec kApsSpec{ScoreFamily::kAps, false, {}};

kernels::SetSpec ApsSetSpec() {
  kernels::SetSpec spec;
  spec.rule = kernels::SetRule::kScoreAtMost;
  spec.score = kApsSpec;
  return spec;
}

void CheckModelInput(const CpsnConformalizer& c, std::size_t d, std::size_t k) {
  if (d != c.model.input_dim) {
    throw ShapeError("features have d=" + std::to_string(d) +
                     " but the regressor expects d=" +
                     std::to_string(c.model.input_dim));
  }
  if (c.num_classes != 0 && k != c.num_classes) {
    throw ShapeError("conformalizer was fitted for k=" +
                     std::to_string(c.num_classes) + " but sample has k=" +
                     std::to_string(k));
  }
}

std::vector<double> Predictions(const RegressorModel& model,
                                const Matrix<double>& features,
                                bool use_parallel) {
  std::vector<double> out(features.rows());
  if (use_parallel) {
    kernels::parallel::Forward(model, features, out);
  } else {
    kernels::serial::Forward(model, features, out);
  }
  return out;
}

}  // namespace

std::vector<double> CpsnTargets(const LabeledSplit& split) {
  split.Validate();
  std::vector<double> targets(split.size());
  kernels::serial::ConformalScores(split.probs, split.labels, kApsSpec, {},
                                   std::nullopt, targets);
  return targets;
}

TrainResult TrainPhase(const LabeledSplit& train, const TrainConfig& config) {
  if (train.size() == 0) throw ValidationError("CPSN training split is empty");
  if (train.features.rows() != train.size()) {
    throw ShapeError("CPSN training split has no features");
  }
  const std::vector<double> targets = CpsnTargets(train);
  return Train(train.features, targets, config);
}

CpsnResiduals ComputeResiduals(const RegressorModel& model,
                               const LabeledSplit& split, double alpha,
                               bool use_parallel) {
  ValidateAlpha(alpha);
  split.Validate();
  const std::vector<double> q = Predictions(model, split.features, use_parallel);
  CpsnResiduals out;
  out.residuals.resize(split.size());
  kernels::serial::ConformalScores(split.probs, split.labels, kApsSpec, {},
                                   -kInf, out.residuals);
  out.group.resize(split.size());
  for (std::size_t i = 0; i < split.size(); ++i) {
    out.residuals[i] -= q[i];  // -inf stays -inf
    out.group[i] = InConfidentGroup(split.probs[i].Max(), alpha) ? 1 : 2;
  }
  return out;
}

CpsnConformalizer ConformalizeFromResiduals(const RegressorModel& model,
                                            const CpsnResiduals& residuals,
                                            double alpha,
                                            std::uint32_t num_classes) {
  ValidateAlpha(alpha);
  if (residuals.residuals.empty()) {
    throw ValidationError("CPSN conformalization split is empty");
  }
  if (residuals.group.size() != residuals.residuals.size()) {
    throw ShapeError("residual and group counts differ");
  }
  std::vector<double> g1, g2;
  for (std::size_t i = 0; i < residuals.residuals.size(); ++i) {
    (residuals.group[i] == 1 ? g1 : g2).push_back(residuals.residuals[i]);
  }
  CpsnConformalizer c;
  c.model = model;
  c.alpha = alpha;
  c.num_classes = num_classes;
  c.n1 = g1.size();
  c.n2 = g2.size();
  c.pooled_delta = ConformalQuantile(residuals.residuals, alpha);
  c.delta1_pooled = g1.empty();
  c.delta2_pooled = g2.empty();
  c.delta1 = g1.empty() ? c.pooled_delta : ConformalQuantile(g1, alpha);
  c.delta2 = g2.empty() ? c.pooled_delta : ConformalQuantile(g2, alpha);
  return c;
}

CpsnConformalizer ConformalizePhase(const RegressorModel& model,
                                    const LabeledSplit& val, double alpha,
                                    bool use_parallel) {
  if (val.size() == 0) {
    throw ValidationError("CPSN conformalization split is empty");
  }
  const CpsnResiduals r = ComputeResiduals(model, val, alpha, use_parallel);
  return ConformalizeFromResiduals(model, r, alpha,
                                   static_cast<std::uint32_t>(val.num_classes()));
}

double CpsnThreshold(const CpsnConformalizer& c, std::span<const double> x,
                     const ProbabilityVector& p) {
  CheckModelInput(c, x.size(), p.size());
  return Forward(c.model, x) + c.DeltaFor(p.Max());
}

PredictionSet CpsnPredict(const CpsnConformalizer& c,
                          std::span<const double> x,
                          const ProbabilityVector& p) {
  const double t = CpsnThreshold(c, x, p);
  PredictionSet set = ScoreInverseSet(p, t, kApsSpec, 1.0);
  set.threshold_used = std::clamp(t, 0.0, 1.0);
  return set;
}

std::vector<double> CpsnThresholds(const CpsnConformalizer& c,
                                   const LabeledSplit& split,
                                   bool use_parallel) {
  split.Validate();
  if (split.size() == 0) return {};
  CheckModelInput(c, split.feature_dim(), split.num_classes());
  std::vector<double> t = Predictions(c.model, split.features, use_parallel);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] += c.DeltaFor(split.probs[i].Max());
  }
  return t;
}

kernels::SetStats EvaluateCpsn(const CpsnConformalizer& c,
                               const LabeledSplit& split, bool use_parallel) {
  const std::vector<double> t = CpsnThresholds(c, split, use_parallel);
  kernels::SetStats stats;
  if (split.size() == 0) return stats;
  if (use_parallel) {
    kernels::parallel::EvaluateSets(split.probs, split.labels, ApsSetSpec(), t,
                                    {}, stats);
  } else {
    kernels::serial::EvaluateSets(split.probs, split.labels, ApsSetSpec(), t,
                                  {}, stats);
  }
  return stats;
}

MeanStd SummarizeFinite(std::span<const double> values) {
  MeanStd s;
  double sum = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    sum += v;
    ++s.count;
  }
  if (s.count == 0) return s;
  s.mean = sum / static_cast<double>(s.count);
  if (s.count < 2) return s;
  double ss = 0.0;
  for (double v : values) {
    if (std::isfinite(v)) ss += (v - s.mean) * (v - s.mean);
  }
  s.std = std::sqrt(ss / static_cast<double>(s.count - 1));
  return s;
}

ResidualSummary SummarizeResiduals(const CpsnResiduals& residuals) {
  std::vector<double> g1, g2;
  ResidualSummary out;
  for (std::size_t i = 0; i < residuals.residuals.size(); ++i) {
    const double r = residuals.residuals[i];
    if (r == -kInf) ++out.top_ranked;
    (residuals.group[i] == 1 ? g1 : g2).push_back(r);
  }
  out.group1 = SummarizeFinite(g1);
  out.group2 = SummarizeFinite(g2);
  return out;
}

CpsnRun RunCpsnPipeline(const LabeledSplit& train, const LabeledSplit& val,
                        const LabeledSplit& test, double alpha,
                        const TrainConfig& config, bool use_parallel) {
  ValidateAlpha(alpha);
  if (test.size() == 0) throw ValidationError("CPSN test split is empty");
  CpsnRun run;
  TrainResult trained = TrainPhase(train, config);
  run.epoch_loss = std::move(trained.epoch_loss);
  const CpsnResiduals r =
      ComputeResiduals(trained.model, val, alpha, use_parallel);
  run.residuals = SummarizeResiduals(r);
  run.conformalizer = ConformalizeFromResiduals(
      trained.model, r, alpha, static_cast<std::uint32_t>(val.num_classes()));
  run.test = EvaluateCpsn(run.conformalizer, test, use_parallel);
  double covered = 0.0, size = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    covered += run.test.covered[i];
    size += run.test.sizes[i];
  }
  run.coverage = covered / static_cast<double>(test.size());
  run.avg_size = size / static_cast<double>(test.size());
  return run;
}

void SaveConformalizer(const std::filesystem::path& path,
                       const CpsnConformalizer& c) {
  using json_util::Json;
  const std::filesystem::path blob_path = path.string() + ".model";
  const std::vector<std::uint8_t> blob = EncodeModel(c.model);
  Json j;
  j["format"] = "cptk-cpsn";
  j["version"] = 1;
  j["alpha"] = c.alpha;
  j["delta1"] = json_util::Real(c.delta1);
  j["delta2"] = json_util::Real(c.delta2);
  j["pooled_delta"] = json_util::Real(c.pooled_delta);
  j["n1"] = c.n1;
  j["n2"] = c.n2;
  j["delta1_pooled"] = c.delta1_pooled;
  j["delta2_pooled"] = c.delta2_pooled;
  j["num_classes"] = c.num_classes;
  j["group_rule"] = "max_prob > 1 - alpha";
  j["group_rule_version"] = c.group_rule_version;
  if (c.temperature) {
    j["temperature"] = *c.temperature;
  } else {
    j["temperature"] = nullptr;
  }
  j["model_file"] = blob_path.filename().string();
  j["model_checksum"] = Crc32Checksum(blob);
  SaveModel(blob_path, c.model);
  json_util::WriteText(path.string(), j.dump(2) + "\n");
}

CpsnConformalizer LoadConformalizer(const std::filesystem::path& path) {
  const std::string text = json_util::ReadText(path.string());
  CpsnConformalizer c;
  std::string model_file, checksum;
  try {
    const auto j = json_util::Json::parse(text);
    if (j.at("format") != "cptk-cpsn") {
      throw DataError(DataErrorCode::kBadManifest, "not a cptk-cpsn document");
    }
    if (j.at("version") != 1) {
      throw DataError(DataErrorCode::kBadVersion, "unsupported cpsn version");
    }
    c.alpha = j.at("alpha").get<double>();
    c.delta1 = json_util::Real(j.at("delta1"));
    c.delta2 = json_util::Real(j.at("delta2"));
    c.pooled_delta = json_util::Real(j.at("pooled_delta"));
    c.n1 = j.at("n1").get<std::size_t>();
    c.n2 = j.at("n2").get<std::size_t>();
    c.delta1_pooled = j.at("delta1_pooled").get<bool>();
    c.delta2_pooled = j.at("delta2_pooled").get<bool>();
    c.num_classes = j.at("num_classes").get<std::uint32_t>();
    c.group_rule_version = j.at("group_rule_version").get<int>();
    if (c.group_rule_version != kCpsnGroupRuleVersion) {
      throw DataError(DataErrorCode::kBadVersion, "unknown CPSN group rule");
    }
    if (!j.at("temperature").is_null()) {
      c.temperature = j["temperature"].get<double>();
    }
    model_file = j.at("model_file").get<std::string>();
    checksum = j.at("model_checksum").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(DataErrorCode::kBadManifest,
                    std::string("malformed cpsn document: ") + e.what());
  }
  ValidateAlpha(c.alpha);
  const std::filesystem::path blob_path = path.parent_path() / model_file;
  const std::vector<std::uint8_t> blob = ReadBytes(blob_path);
  if (Crc32Checksum(blob) != checksum) {
    throw DataError(DataErrorCode::kChecksumMismatch,
                    "checksum mismatch for " + blob_path.string());
  }
  c.model = DecodeModel(blob);
  return c;
}

}  // namespace cptk
