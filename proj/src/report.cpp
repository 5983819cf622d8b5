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

#include <cstdio>
#include <sstream>

#include "cptk/eval.hpp"
#include "json_util.hpp"

namespace cptk {

namespace {

using json_util::Json;

Json MeanStdJson(const MeanStd& s) {
  return {{"mean", json_util::Real(s.mean)},
          {"std", json_util::Real(s.std)},
          {"count", s.count}};
}

template <typename T>
Json Optional(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

Json OptionalReal(const std::optional<double>& v) {
  return v ? json_util::Real(*v) : Json(nullptr);
}

Json TrialJson(const TrialRecord& r) {
  Json j;
  j["trial"] = r.trial;
  j["seed"] = r.seed;
  j["coverage"] = r.coverage;
  j["size"] = r.avg_size;
  j["n_test"] = r.n_test;
  j["temperature"] = Optional(r.temperature);
  if (r.q) j["q"] = json_util::Real(*r.q);
  if (r.raps) j["raps"] = {{"a", r.raps->a}, {"b", r.raps->b}};
  if (r.delta1) {
    j["delta1"] = OptionalReal(r.delta1);
    j["delta2"] = OptionalReal(r.delta2);
    j["n1"] = Optional(r.n1);
    j["n2"] = Optional(r.n2);
  }
  if (r.residuals) {
    j["residuals"] = {{"group1", MeanStdJson(r.residuals->group1)},
                      {"group2", MeanStdJson(r.residuals->group2)},
                      {"top_ranked", r.residuals->top_ranked}};
  }
  return j;
}

std::string MeanPm(const MeanStd& s) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f +- %.3f", s.mean, s.std);
  return buf;
}

std::string Pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace

std::string ReportToJson(const ExperimentReport& report) {
  const ExperimentConfig& c = report.config;
  Json j;
  j["format"] = "cptk-eval-report";
  j["version"] = 1;
  j["source"] = report.source;
  Json cfg;
  Json methods = Json::array();
  for (Method m : c.methods) methods.push_back(std::string(MethodName(m)));
  cfg["methods"] = methods;
  cfg["alphas"] = c.alphas;
  cfg["trials"] = c.trials;
  cfg["seed"] = c.seed;
  cfg["fractions"] = c.fractions;
  cfg["n_train"] = c.n_train;
  cfg["n_val"] = c.n_val;
  cfg["n_test"] = c.n_test;
  cfg["temperature_scaling"] = c.temperature_scaling;
  cfg["train"] = Json::parse(TrainConfigToJson(c.train));
  j["config"] = cfg;
  Json results = Json::array();
  for (const EvalReport& r : report.reports) {
    Json e;
    e["method"] = std::string(MethodName(r.method));
    e["alpha"] = r.alpha;
    e["n_test"] = r.n_test;
    e["trials"] = r.records.size();
    e["coverage"] = {{"mean", r.coverage.mean},
                     {"std", r.coverage.std},
                     {"se_binomial", r.coverage_se_binomial},
                     {"se_trials", r.coverage_se_trials}};
    e["size"] = {{"mean", r.size.mean}, {"std", r.size.std}};
    if (r.delta1) {
      e["delta1"] = MeanStdJson(*r.delta1);
      e["delta2"] = MeanStdJson(*r.delta2);
    }
    Json trials = Json::array();
    for (const TrialRecord& t : r.records) trials.push_back(TrialJson(t));
    e["per_trial"] = trials;
    results.push_back(e);
  }
  j["results"] = results;
  return j.dump(2) + "\n";
}

std::string ReportToTable(const ExperimentReport& report) {
  const ExperimentConfig& c = report.config;
  constexpr std::size_t kName = 10, kCell = 17;
  std::ostringstream out;
  out << report.source << " (" << c.trials << " trials)\n";
  std::string head = Pad("Method", kName);
  std::string sub = Pad("", kName);
  for (double a : c.alphas) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "alpha=%.3g", a);
    head += " | " + Pad(buf, 2 * kCell + 1);
    sub += " | " + Pad("Size", kCell) + " " + Pad("Coverage", kCell);
  }
  out << head << "\n" << sub << "\n";
  out << std::string(sub.size(), '-') << "\n";
  for (Method m : c.methods) {
    std::string line = Pad(std::string(MethodName(m)), kName);
    for (double a : c.alphas) {
      const EvalReport& r = report.Find(m, a);
      line += " | " + Pad(MeanPm(r.size), kCell) + " " +
              Pad(MeanPm(r.coverage), kCell);
    }
    out << line << "\n";
  }
  for (double a : c.alphas) {
    for (Method m : c.methods) {
      if (m != Method::kCpsn) continue;
      const EvalReport& r = report.Find(m, a);
      char buf[160];
      std::snprintf(buf, sizeof(buf),
                    "cpsn alpha=%.3g: delta1 %.3f +- %.3f (%zu finite), "
                    "delta2 %.3f +- %.3f (%zu finite)\n",
                    a, r.delta1->mean, r.delta1->std, r.delta1->count,
                    r.delta2->mean, r.delta2->std, r.delta2->count);
      out << buf;
    }
  }
  return out.str();
}

}  // namespace cptk
