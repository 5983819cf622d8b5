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

#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "cptk/conformal.hpp"
#include "cptk/cpsn.hpp"
#include "cptk/dataio.hpp"
#include "cptk/eval.hpp"
#include "json.hpp"
#include "cptk/tempscale.hpp"
#include "test_util.hpp"

namespace cptk {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result RunCli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::Run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string ReadText(const fs::path& p) {
  const auto b = ReadBytes(p);
  return {b.begin(), b.end()};
}

std::vector<std::string> Lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    unsetenv("CPTK_OUTPUT_DIR");
    data_ = dir_.path() / "data";
    const auto r = RunCli({"synth", "--k", "4", "--d", "5", "--n", "600",
                           "--seed", "3", "--heteroscedastic", "--out",
                           data_.string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }

  // Library replica of the CLI's split preparation.
  struct Splits {
    LabeledSplit train, val, test;
    double temperature;
  };
  Splits Prepare(std::uint64_t seed) const {
    const Dataset ds = LoadDataset(data_);
    const auto idx = SplitDataset(ds.labels.size(), {0.8, 0.1, 0.1}, seed);
    const Matrix<double> logits = ScoresAsLogits(ds).Gather(idx.val);
    std::vector<ClassIndex> labels;
    for (std::size_t r : idx.val) labels.push_back(ds.labels[r]);
    const double T = FitTemperature(logits, labels).temperature;
    return {ToLabeledSplit(ds, idx.train, T), ToLabeledSplit(ds, idx.val, T),
            ToLabeledSplit(ds, idx.test, T), T};
  }

  TempDir dir_;
  fs::path data_;
};

TEST_F(CliTest, SynthMatchesLibrary) {
  SyntheticTask task;
  task.k = 4;
  task.d = 5;
  task.seed = 3;
  task.heteroscedastic = true;
  const Dataset direct = SyntheticToDataset(GenerateSynthetic(task, 600), "synthetic");
  const Dataset loaded = LoadDataset(data_);
  EXPECT_EQ(loaded.features, direct.features);
  EXPECT_EQ(loaded.scores, direct.scores);
  EXPECT_EQ(loaded.labels, direct.labels);
  // Same flags, same bytes.
  const auto again = dir_.path() / "again";
  ASSERT_EQ(RunCli({"synth", "--k", "4", "--d", "5", "--n", "600", "--seed",
                    "3", "--heteroscedastic", "--out", again.string()})
                .code,
            0);
  for (const char* f : {"features.cptk", "scores.cptk", "labels.cptk",
                        "manifest.json"}) {
    EXPECT_EQ(ReadBytes(data_ / f), ReadBytes(again / f)) << f;
  }
}

TEST_F(CliTest, SynthRejectsOneClass) {
  const auto r = RunCli({"synth", "--k", "1", "--out",
                         (dir_.path() / "bad").string()});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("--k"), std::string::npos);
}

TEST_F(CliTest, CalibrateMatchesLibrary) {
  for (const char* method : {"aps", "aps_rand", "raps", "raps_rand", "naive"}) {
    const auto path = dir_.path() / (std::string(method) + ".json");
    const auto r = RunCli({"calibrate", "--data", data_.string(), "--alpha",
                           "0.1", "--method", method, "--seed", "11", "--out",
                           path.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const CalibratedThreshold cli_t = ThresholdFromJson(ReadText(path));

    const auto s = Prepare(11);
    const Method m = MethodFromName(method);
    std::optional<RapsParams> raps;
    if (m == Method::kRaps || m == Method::kRapsRandomized) {
      raps = TuneRaps(s.train, 0.1, {}, DeriveSeed(11, "raps"));
    }
    CalibratedThreshold lib =
        m == Method::kNaive
            ? NaiveThreshold(0.1)
            : Calibrate(s.val, 0.1, m, raps, DeriveSeed(11, MethodName(m)));
    lib.temperature = s.temperature;
    EXPECT_EQ(cli_t, lib) << method;
    if (m == Method::kAps) {
      EXPECT_GE(cli_t.q, 0.0);
      EXPECT_LE(cli_t.q, 1.0);
    }
    EXPECT_EQ(ThresholdFromJson(r.out), cli_t);
  }
}

TEST_F(CliTest, CalibrateErrors) {
  EXPECT_EQ(RunCli({"calibrate", "--alpha", "0.1"}).code, cli::kExitUsage);
  EXPECT_EQ(RunCli({"calibrate", "--data", (dir_.path() / "nope").string()}).code,
            cli::kExitData);
  const auto r = RunCli({"calibrate", "--data", data_.string(), "--alpha", "1.5",
                         "--out", (dir_.path() / "t.json").string()});
  EXPECT_EQ(r.code, cli::kExitData);
  EXPECT_NE(r.err.find("alpha"), std::string::npos);
  EXPECT_EQ(RunCli({"calibrate", "--data", data_.string(), "--method", "cpsn"})
                .code,
            cli::kExitUsage);
  EXPECT_EQ(RunCli({"calibrate", "--data", data_.string(), "--method", "bogus"})
                .code,
            cli::kExitData);
}

TEST_F(CliTest, TrainCpsnMatchesLibrary) {
  const auto path = dir_.path() / "cpsn.json";
  const auto r = RunCli({"train-cpsn", "--data", data_.string(), "--alpha",
                         "0.1", "--seed", "5", "--epochs", "3", "--hidden", "8",
                         "--out", path.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto cli_c = LoadConformalizer(path);

  const auto s = Prepare(5);
  TrainConfig config;
  config.epochs = 3;
  config.hidden_width = 8;
  config.seed = DeriveSeed(5, "regressor");
  const auto model = TrainPhase(s.train, config).model;
  auto lib = ConformalizePhase(model, s.val, 0.1);
  lib.temperature = s.temperature;
  EXPECT_EQ(cli_c, lib);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("n1").get<std::size_t>(), lib.n1);
}

TEST_F(CliTest, PredictEmitsJsonLines) {
  const auto t = dir_.path() / "t.json";
  ASSERT_EQ(RunCli({"calibrate", "--data", data_.string(), "--method",
                    "aps_rand", "--out", t.string()})
                .code,
            0);
  const auto r = RunCli({"predict", "--artifact", t.string(), "--data",
                         data_.string(), "--rows", "4,0,9"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = Lines(r.out);
  ASSERT_EQ(lines.size(), 3u);
  const auto threshold = ThresholdFromJson(ReadText(t));
  const Dataset ds = LoadDataset(data_);
  const std::size_t rows[] = {4, 0, 9};
  for (std::size_t i = 0; i < 3; ++i) {
    const auto j = nlohmann::json::parse(lines[i]);
    EXPECT_EQ(j.at("row").get<std::size_t>(), rows[i]);
    const std::vector<std::size_t> one{rows[i]};
    const auto split = ToLabeledSplit(ds, one, threshold.temperature);
    const auto set = PredictSet(threshold, split.probs[0], rows[i]);
    EXPECT_EQ(j.at("set").get<std::vector<ClassIndex>>(), set.classes);
    EXPECT_EQ(j.at("size").get<std::size_t>(), set.size());
    EXPECT_EQ(j.at("label").get<ClassIndex>(), ds.labels[rows[i]]);
  }
  const auto single = RunCli({"predict", "--artifact", t.string(), "--probs",
                              "0.7,0.2,0.05,0.05"});
  ASSERT_EQ(single.code, 0) << single.err;
  EXPECT_EQ(Lines(single.out).size(), 1u);
}

TEST_F(CliTest, PredictRendersClassNamesInManifestOrder) {
  Dataset ds = LoadDataset(data_);
  ds.manifest.class_names = {"ant", "bee", "cat", "dog"};
  const auto named = dir_.path() / "named";
  WriteDataset(ds, named);
  const auto t = dir_.path() / "t.json";
  ASSERT_EQ(RunCli({"calibrate", "--data", named.string(), "--out", t.string()})
                .code,
            0);
  const auto r = RunCli({"predict", "--artifact", t.string(), "--data",
                         named.string(), "--rows", "1,2"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const auto& line : Lines(r.out)) {
    const auto j = nlohmann::json::parse(line);
    const auto set = j.at("set").get<std::vector<std::size_t>>();
    const auto names = j.at("names").get<std::vector<std::string>>();
    ASSERT_EQ(set.size(), names.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
      EXPECT_EQ(names[i], ds.manifest.class_names[set[i]]);
    }
  }
}

TEST_F(CliTest, PredictClassCountMismatch) {
  const auto other = dir_.path() / "k3";
  ASSERT_EQ(RunCli({"synth", "--k", "3", "--d", "5", "--n", "100", "--out",
                    other.string()})
                .code,
            0);
  const auto t = dir_.path() / "t.json";
  ASSERT_EQ(RunCli({"calibrate", "--data", data_.string(), "--out", t.string()})
                .code,
            0);
  const auto r = RunCli({"predict", "--artifact", t.string(), "--data",
                         other.string()});
  EXPECT_EQ(r.code, cli::kExitData);
  EXPECT_NE(r.err.find("k="), std::string::npos);
}

TEST_F(CliTest, PredictCpsnArtifact) {
  const auto c = dir_.path() / "c.json";
  ASSERT_EQ(RunCli({"train-cpsn", "--data", data_.string(), "--epochs", "2",
                    "--hidden", "4", "--out", c.string()})
                .code,
            0);
  const auto r = RunCli({"predict", "--artifact", c.string(), "--data",
                         data_.string(), "--rows", "0,1,2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(Lines(r.out).size(), 3u);
  EXPECT_EQ(RunCli({"predict", "--artifact", c.string(), "--probs",
                    "0.7,0.2,0.05,0.05"})
                .code,
            cli::kExitUsage);
}

TEST_F(CliTest, EvalMatchesLibraryAndCpsnOnlyTable) {
  const auto out = dir_.path() / "report.json";
  const auto r = RunCli({"eval", "--synthetic", "--k", "4", "--d", "5",
                         "--methods", "cpsn", "--alphas", "0.1", "--trials", "2",
                         "--n-train", "300", "--n-val", "300", "--n-test", "300",
                         "--epochs", "2", "--hidden", "8", "--seed", "9",
                         "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  int rows = 0;
  for (const auto& line : Lines(r.out)) {
    if (line.rfind("cpsn", 0) == 0 && line.find('|') != std::string::npos) {
      ++rows;
    }
    EXPECT_EQ(line.find("aps"), std::string::npos) << line;
  }
  EXPECT_EQ(rows, 1);

  SyntheticTask task;
  task.k = 4;
  task.d = 5;
  task.heteroscedastic = true;
  ExperimentConfig config;
  config.methods = {Method::kCpsn};
  config.alphas = {0.1};
  config.trials = 2;
  config.n_train = config.n_val = config.n_test = 300;
  config.train.epochs = 2;
  config.train.hidden_width = 8;
  config.seed = 9;
  EXPECT_EQ(ReadText(out), ReportToJson(RunSyntheticExperiment(task, config)));
}

TEST_F(CliTest, EvalPhaseFailureIsNonzero) {
  const auto r = RunCli({"eval", "--synthetic", "--k", "4", "--d", "5",
                         "--trials", "1", "--n-val", "5", "--quiet", "--out",
                         (dir_.path() / "r.json").string()});
  EXPECT_EQ(r.code, cli::kExitData);
  EXPECT_NE(r.err.find("phase"), std::string::npos);
  EXPECT_EQ(RunCli({"eval", "--trials", "1"}).code, cli::kExitUsage);
}

TEST_F(CliTest, EvalOnDataset) {
  const auto out = dir_.path() / "report.json";
  const auto r = RunCli({"eval", "--data", data_.string(), "--methods",
                         "aps,naive", "--trials", "2", "--quiet", "--out",
                         out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(ReadText(out));
  EXPECT_EQ(j.at("format"), "cptk-eval-report");
}

TEST_F(CliTest, HelpDocumentsEveryFlag) {
  const auto top = RunCli({"--help"});
  EXPECT_EQ(top.code, 0);
  for (const char* sub : {"synth", "calibrate", "train-cpsn", "predict", "eval",
                          "inspect"}) {
    EXPECT_NE(top.out.find(sub), std::string::npos) << sub;
  }
  const auto eval = RunCli({"eval", "--help"});
  EXPECT_EQ(eval.code, 0);
  for (const char* flag : {"--data", "--seed", "--fractions", "--synthetic",
                           "--methods", "--alphas", "--trials", "--workers",
                           "--lr", "--epochs", "--hidden", "--raps-a", "--out"}) {
    EXPECT_NE(eval.out.find(flag), std::string::npos) << flag;
  }
}

TEST_F(CliTest, UnknownFlagPrintsUsage) {
  const auto r = RunCli({"calibrate", "--data", data_.string(), "--bogus"});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("--bogus"), std::string::npos);
  EXPECT_NE(r.err.find("--alpha"), std::string::npos);
  EXPECT_EQ(RunCli({}).code, cli::kExitUsage);
  EXPECT_EQ(RunCli({"frobnicate"}).code, cli::kExitUsage);
}

TEST_F(CliTest, OutputDirectoryFromEnvironment) {
  const auto env_dir = dir_.path() / "env";
  setenv("CPTK_OUTPUT_DIR", env_dir.c_str(), 1);
  const auto r = RunCli({"calibrate", "--data", data_.string()});
  unsetenv("CPTK_OUTPUT_DIR");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(env_dir / "threshold.json"));
}

TEST_F(CliTest, Inspect) {
  const auto r = RunCli({"inspect", "--data", data_.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("name: synthetic"), std::string::npos);
  const auto t = dir_.path() / "t.json";
  ASSERT_EQ(RunCli({"calibrate", "--data", data_.string(), "--out", t.string()})
                .code,
            0);
  EXPECT_NE(RunCli({"inspect", "--artifact", t.string()}).out.find("threshold:"),
            std::string::npos);
  EXPECT_EQ(RunCli({"inspect"}).code, cli::kExitUsage);
}

TEST_F(CliTest, CorruptDatasetIsDataError) {
  auto bytes = ReadBytes(data_ / "labels.cptk");
  bytes.back() ^= 1;
  WriteBytes(data_ / "labels.cptk", bytes);
  const auto r = RunCli({"inspect", "--data", data_.string()});
  EXPECT_EQ(r.code, cli::kExitData);
  EXPECT_NE(r.err.find("checksum"), std::string::npos);
}

}  // namespace
}  // namespace cptk
