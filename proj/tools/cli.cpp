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

#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>

#include "CLI11.hpp"
#include "cptk/conformal.hpp"
#include "cptk/cpsn.hpp"
#include "cptk/dataio.hpp"
#include "cptk/error.hpp"
#include "cptk/eval.hpp"
#include "cptk/rng.hpp"
#include "cptk/tempscale.hpp"
#include "json.hpp"

namespace cptk::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

// --- Option groups ----------------------------------------------------------

struct SplitOptions {
  std::string data;
  std::uint64_t seed = 0;
  std::vector<double> fractions{0.8, 0.1, 0.1};
  bool no_temperature = false;
};

struct SynthOptions {
  std::uint32_t k = 11;
  std::uint32_t d = 64;
  std::size_t n = 20000;
  std::uint64_t seed = 0;
  bool heteroscedastic = false;
  double temp_low = 0.5;
  double temp_high = 3.0;
  double signal = 3.0;
  std::string distortion = "difficulty-blind";
  double logit_scale = 1.0;
  std::string name = "synthetic";
};

struct TrainOptions {
  TrainConfig config;
};

struct GridOptions {
  std::vector<double> a;
  std::vector<std::uint32_t> b;
};

void AddSplitOptions(CLI::App* cmd, SplitOptions& o, bool require_data) {
  auto* data = cmd->add_option("--data", o.data, "Dataset directory");
  if (require_data) data->required();
  cmd->add_option("--seed", o.seed, "Global seed; every stage derives its own")
      ->capture_default_str();
  cmd->add_option("--fractions", o.fractions,
                  "Train,val,test fractions (must sum to 1)")
      ->delimiter(',')
      ->expected(3)
      ->capture_default_str();
  cmd->add_flag("--no-temperature", o.no_temperature,
                "Skip temperature scaling (T = 1)");
}

void AddSynthOptions(CLI::App* cmd, SynthOptions& o) {
  cmd->add_option("--k", o.k, "Number of classes (>= 2)")
      ->check(CLI::Range(2u, 1u << 20))
      ->capture_default_str();
  cmd->add_option("--d", o.d, "Feature dimension (>= 1)")
      ->check(CLI::Range(1u, 1u << 20))
      ->capture_default_str();
  cmd->add_flag("--heteroscedastic", o.heteroscedastic,
                "Per-sample temperature field varying with x");
  cmd->add_option("--temp-low", o.temp_low, "Lower end of the temperature range")
      ->capture_default_str();
  cmd->add_option("--temp-high", o.temp_high,
                  "Upper end of the temperature range")
      ->capture_default_str();
  cmd->add_option("--signal", o.signal, "Standard deviation of the base logits")
      ->capture_default_str();
  cmd->add_option("--distortion", o.distortion,
                  "Emitted classifier: none, difficulty-blind, logit-scale")
      ->capture_default_str();
  cmd->add_option("--logit-scale", o.logit_scale,
                  "Factor for the logit-scale distortion")
      ->capture_default_str();
}

void AddTrainOptions(CLI::App* cmd, TrainOptions& o) {
  auto& c = o.config;
  cmd->add_option("--lr", c.learning_rate, "Regressor learning rate")
      ->capture_default_str();
  cmd->add_option("--weight-decay", c.weight_decay, "Decoupled weight decay")
      ->capture_default_str();
  cmd->add_option("--batch", c.batch_size, "Mini-batch size")
      ->capture_default_str();
  cmd->add_option("--epochs", c.epochs, "Training epochs")->capture_default_str();
  cmd->add_option("--hidden", c.hidden_width, "Hidden layer width")
      ->capture_default_str();
}

void AddGridOptions(CLI::App* cmd, GridOptions& o) {
  cmd->add_option("--raps-a", o.a, "RAPS penalty grid (comma separated)")
      ->delimiter(',');
  cmd->add_option("--raps-b", o.b, "RAPS rank cutoff grid (comma separated)")
      ->delimiter(',');
}

std::optional<RapsGrid> GridFrom(const GridOptions& o, std::size_t k) {
  if (o.a.empty() && o.b.empty()) return std::nullopt;
  RapsGrid g = DefaultRapsGrid(k);
  if (!o.a.empty()) g.a = o.a;
  if (!o.b.empty()) g.b = o.b;
  return g;
}

SyntheticTask TaskFrom(const SynthOptions& o) {
  SyntheticTask t;
  t.k = o.k;
  t.d = o.d;
  t.heteroscedastic = o.heteroscedastic;
  t.temperature_low = o.temp_low;
  t.temperature_high = o.temp_high;
  t.signal = o.signal;
  t.distortion = DistortionFromName(o.distortion);
  t.logit_scale = o.logit_scale;
  t.seed = o.seed;
  t.Validate();
  return t;
}

std::array<double, 3> Fractions(const std::vector<double>& f) {
  if (f.size() != 3) throw UsageError("--fractions needs three values");
  return {f[0], f[1], f[2]};
}

// An explicit --out wins; otherwise CPTK_OUTPUT_DIR, then the working
// directory.
fs::path OutputPath(const std::string& flag, const std::string& fallback) {
  if (!flag.empty()) return flag;
  if (const char* dir = std::getenv("CPTK_OUTPUT_DIR"); dir && *dir) {
    fs::create_directories(dir);
    return fs::path(dir) / fallback;
  }
  return fallback;
}

// --- Shared split preparation -----------------------------------------------

struct Prepared {
  Dataset dataset;
  SplitIndices idx;
  std::optional<double> temperature;
  LabeledSplit train, val, test;
};

Prepared Prepare(const SplitOptions& o) {
  Prepared p;
  p.dataset = LoadDataset(o.data);
  p.idx = SplitDataset(p.dataset.labels.size(), Fractions(o.fractions), o.seed);
  if (p.dataset.manifest.temperature) {
    p.temperature = p.dataset.manifest.temperature;
  } else if (!o.no_temperature) {
    if (p.idx.val.size() < kMinTemperatureExamples) {
      throw ValidationError("temperature phase: validation split has " +
                            std::to_string(p.idx.val.size()) + " rows, need " +
                            std::to_string(kMinTemperatureExamples));
    }
    const Matrix<double> logits = ScoresAsLogits(p.dataset).Gather(p.idx.val);
    std::vector<ClassIndex> labels;
    for (std::size_t r : p.idx.val) labels.push_back(p.dataset.labels[r]);
    p.temperature = FitTemperature(logits, labels).temperature;
  }
  p.train = ToLabeledSplit(p.dataset, p.idx.train, p.temperature);
  p.val = ToLabeledSplit(p.dataset, p.idx.val, p.temperature);
  p.test = ToLabeledSplit(p.dataset, p.idx.test, p.temperature);
  return p;
}

Json SetJson(std::size_t row, const PredictionSet& set,
             std::optional<ClassIndex> label,
             const std::vector<std::string>& names) {
  Json j;
  j["row"] = row;
  j["set"] = set.classes;
  if (!names.empty()) {
    Json n = Json::array();
    for (ClassIndex c : set.classes) n.push_back(names[c]);
    j["names"] = n;
  }
  j["size"] = set.size();
  if (label) j["label"] = *label;
  return j;
}

Json RealJson(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "+inf" : "-inf";
}

// --- Subcommands ------------------------------------------------------------

int CmdSynth(const SynthOptions& o, std::size_t n, const std::string& out_flag,
             std::ostream& out) {
  const SyntheticTask task = TaskFrom(o);
  if (n < 1) throw UsageError("--n must be >= 1");
  const SyntheticData data = GenerateSynthetic(task, n);
  const fs::path dir = OutputPath(out_flag, o.name);
  WriteDataset(SyntheticToDataset(data, o.name), dir);
  out << dir.string() << "\n";
  return kExitOk;
}

int CmdCalibrate(const SplitOptions& so, double alpha,
                 const std::string& method_name, const GridOptions& grid,
                 std::optional<double> raps_a, std::optional<std::uint32_t> raps_b,
                 const std::string& out_flag, std::ostream& out) {
  ValidateAlpha(alpha);
  const Method method = MethodFromName(method_name);
  if (method == Method::kCpsn) {
    throw UsageError("use train-cpsn for the cpsn method");
  }
  const Prepared p = Prepare(so);
  std::optional<RapsParams> raps;
  if (method == Method::kRaps || method == Method::kRapsRandomized) {
    if (raps_a || raps_b) {
      raps = RapsParams{raps_a.value_or(0.0), raps_b.value_or(1)};
    } else {
      raps = TuneRaps(p.train, alpha, GridFrom(grid, p.val.num_classes()),
                      DeriveSeed(so.seed, "raps"));
    }
  }
  CalibratedThreshold t =
      method == Method::kNaive
          ? NaiveThreshold(alpha)
          : Calibrate(p.val, alpha, method, raps,
                      DeriveSeed(so.seed, MethodName(method)));
  t.temperature = p.temperature;
  const fs::path path = OutputPath(out_flag, "threshold.json");
  WriteBytes(path, [&] {
    const std::string s = ThresholdToJson(t) + "\n";
    return std::vector<std::uint8_t>(s.begin(), s.end());
  }());
  out << ThresholdToJson(t) << "\n";
  return kExitOk;
}

int CmdTrainCpsn(const SplitOptions& so, double alpha, const TrainOptions& to,
                 const std::string& out_flag, std::ostream& out) {
  ValidateAlpha(alpha);
  const Prepared p = Prepare(so);
  TrainConfig config = to.config;
  config.seed = DeriveSeed(so.seed, "regressor");
  const TrainResult trained = TrainPhase(p.train, config);
  const CpsnResiduals r = ComputeResiduals(trained.model, p.val, alpha);
  CpsnConformalizer c = ConformalizeFromResiduals(
      trained.model, r, alpha, static_cast<std::uint32_t>(p.val.num_classes()));
  c.temperature = p.temperature;
  const fs::path path = OutputPath(out_flag, "cpsn.json");
  SaveConformalizer(path, c);
  const ResidualSummary s = SummarizeResiduals(r);
  Json j;
  j["artifact"] = path.string();
  j["delta1"] = RealJson(c.delta1);
  j["delta2"] = RealJson(c.delta2);
  j["n1"] = c.n1;
  j["n2"] = c.n2;
  j["residual_group1"] = {{"mean", s.group1.mean}, {"std", s.group1.std}};
  j["residual_group2"] = {{"mean", s.group2.mean}, {"std", s.group2.std}};
  j["final_train_loss"] =
      trained.epoch_loss.empty() ? Json(nullptr) : Json(trained.epoch_loss.back());
  out << j.dump(2) << "\n";
  return kExitOk;
}

int CmdPredict(const std::string& artifact, const std::string& data,
               const std::vector<std::size_t>& rows,
               const std::vector<double>& probs,
               const std::vector<double>& features, std::ostream& out) {
  const auto bytes = ReadBytes(artifact);
  const std::string text(bytes.begin(), bytes.end());
  std::string format;
  try {
    format = Json::parse(text).at("format").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw DataError(DataErrorCode::kBadManifest,
                    "artifact is not a cptk JSON document: " + artifact);
  }
  std::optional<CalibratedThreshold> thr;
  std::optional<CpsnConformalizer> cpsn;
  if (format == "cptk-threshold") {
    thr = ThresholdFromJson(text);
  } else if (format == "cptk-cpsn") {
    cpsn = LoadConformalizer(artifact);
  } else {
    throw DataError(DataErrorCode::kBadManifest,
                    "unknown artifact format '" + format + "'");
  }
  const std::optional<double> T = thr ? thr->temperature : cpsn->temperature;

  auto predict = [&](std::span<const double> x, const ProbabilityVector& p,
                     std::size_t ordinal) {
    return thr ? PredictSet(*thr, p, ordinal) : CpsnPredict(*cpsn, x, p);
  };

  if (!probs.empty()) {
    if (!data.empty() || !rows.empty()) {
      throw UsageError("--probs cannot be combined with --data or --rows");
    }
    if (cpsn && features.empty()) {
      throw UsageError("cpsn artifacts need --features with --probs");
    }
    const ProbabilityVector p = ProbabilityVector::FromValues(probs);
    out << SetJson(0, predict(features, p, 0), std::nullopt, {}).dump() << "\n";
    return kExitOk;
  }
  if (data.empty()) throw UsageError("predict needs --data or --probs");
  const Dataset ds = LoadDataset(data);
  std::vector<std::size_t> chosen = rows;
  if (chosen.empty()) {
    chosen.resize(ds.labels.size());
    for (std::size_t i = 0; i < chosen.size(); ++i) chosen[i] = i;
  }
  for (std::size_t r : chosen) {
    if (r >= ds.labels.size()) {
      throw ValidationError("row " + std::to_string(r) + " out of range");
    }
  }
  const LabeledSplit split = ToLabeledSplit(ds, chosen, T);
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    const PredictionSet set =
        predict(split.features.row(i), split.probs[i], chosen[i]);
    out << SetJson(chosen[i], set, split.labels[i], ds.manifest.class_names).dump()
        << "\n";
  }
  return kExitOk;
}

int CmdEval(const SplitOptions& so, bool synthetic, const SynthOptions& syn,
            const std::vector<std::string>& method_names,
            const std::vector<double>& alphas, std::uint32_t trials,
            std::size_t n_train, std::size_t n_val, std::size_t n_test,
            int workers, const TrainOptions& to, const GridOptions& grid,
            const std::string& out_flag, bool quiet, std::ostream& out) {
  if (synthetic == !so.data.empty()) {
    throw UsageError("eval needs exactly one of --data or --synthetic");
  }
  ExperimentConfig c;
  c.methods.clear();
  for (const auto& m : method_names) c.methods.push_back(MethodFromName(m));
  c.alphas = alphas;
  c.trials = trials;
  c.seed = so.seed;
  c.fractions = Fractions(so.fractions);
  c.n_train = n_train;
  c.n_val = n_val;
  c.n_test = n_test;
  c.temperature_scaling = !so.no_temperature;
  c.train = to.config;
  c.workers = workers;
  ExperimentReport report;
  if (synthetic) {
    const SyntheticTask task = TaskFrom(syn);
    c.raps_grid = GridFrom(grid, task.k);
    report = RunSyntheticExperiment(task, c);
  } else {
    const Dataset ds = LoadDataset(so.data);
    c.raps_grid = GridFrom(grid, ds.manifest.k);
    report = RunDatasetExperiment(ds, c);
  }
  const std::string json = ReportToJson(report);
  const fs::path path = OutputPath(out_flag, "report.json");
  WriteBytes(path, std::vector<std::uint8_t>(json.begin(), json.end()));
  if (!quiet) out << ReportToTable(report);
  out << "report: " << path.string() << "\n";
  return kExitOk;
}

int CmdInspect(const std::string& data, const std::string& artifact,
               std::ostream& out) {
  if (data.empty() == artifact.empty()) {
    throw UsageError("inspect needs exactly one of --data or --artifact");
  }
  if (!artifact.empty()) {
    const auto bytes = ReadBytes(artifact);
    const std::string text(bytes.begin(), bytes.end());
    Json j;
    try {
      j = Json::parse(text);
    } catch (const nlohmann::json::exception&) {
      throw DataError(DataErrorCode::kBadManifest, "artifact is not JSON");
    }
    const std::string format = j.value("format", "");
    if (format == "cptk-threshold") {
      const CalibratedThreshold t = ThresholdFromJson(text);
      out << "threshold: method=" << MethodName(t.method) << " alpha=" << t.alpha
          << " q=" << t.q << " n_cal=" << t.n_cal << "\n";
    } else if (format == "cptk-cpsn") {
      const CpsnConformalizer c = LoadConformalizer(artifact);
      out << "cpsn: alpha=" << c.alpha << " delta1=" << c.delta1
          << " delta2=" << c.delta2 << " n1=" << c.n1 << " n2=" << c.n2
          << " d=" << c.model.input_dim << " h=" << c.model.hidden_dim << "\n";
    } else {
      throw DataError(DataErrorCode::kBadManifest,
                      "unknown artifact format '" + format + "'");
    }
    return kExitOk;
  }
  const Dataset ds = LoadDataset(data);
  const auto& m = ds.manifest;
  out << "name: " << m.name << "\n"
      << "n: " << m.n << "  k: " << m.k << "  d: " << m.d << "\n"
      << "scores: "
      << (m.scores_kind == ScoresKind::kLogits ? "logits" : "probabilities")
      << "\n"
      << "temperature: "
      << (m.temperature ? std::to_string(*m.temperature) : std::string("none"))
      << "\n"
      << "conditionals: " << (ds.conditionals ? "yes" : "no") << "\n"
      << "checksums: ok\n";
  std::vector<std::size_t> counts(m.k, 0);
  for (std::uint32_t y : ds.labels) ++counts[y];
  out << "label counts:";
  for (std::size_t c = 0; c < counts.size(); ++c) {
    out << " ";
    if (!m.class_names.empty()) out << m.class_names[c] << "=";
    out << counts[c];
  }
  out << "\n";
  return kExitOk;
}

}  // namespace

int Run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"cptk: conformal prediction sets for classifier outputs"};
  app.name("cptk");
  app.require_subcommand(1);

  // synth
  SynthOptions synth;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic dataset");
  AddSynthOptions(synth_cmd, synth);
  synth_cmd->add_option("--n", synth.n, "Number of samples")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
  synth_cmd->add_option("--name", synth.name, "Dataset name")->capture_default_str();
  synth_cmd->add_option("--out", synth_out,
                        "Output directory (default $CPTK_OUTPUT_DIR/<name>)");

  // calibrate
  SplitOptions cal_split;
  double cal_alpha = 0.1;
  std::string cal_method = "aps";
  GridOptions cal_grid;
  std::optional<double> cal_raps_a;
  std::optional<std::uint32_t> cal_raps_b;
  std::string cal_out;
  auto* cal_cmd = app.add_subcommand(
      "calibrate", "Fit a single-threshold method on the validation fold");
  AddSplitOptions(cal_cmd, cal_split, true);
  cal_cmd->add_option("--alpha", cal_alpha, "Miscoverage level in (0, 1)")
      ->capture_default_str();
  cal_cmd->add_option("--method", cal_method,
                      "naive, aps, aps_rand, raps or raps_rand")
      ->capture_default_str();
  AddGridOptions(cal_cmd, cal_grid);
  cal_cmd->add_option("--a", cal_raps_a, "Fixed RAPS a (skips tuning)");
  cal_cmd->add_option("--b", cal_raps_b, "Fixed RAPS b (skips tuning)");
  cal_cmd->add_option("--out", cal_out,
                      "Artifact path (default $CPTK_OUTPUT_DIR/threshold.json)");

  // train-cpsn
  SplitOptions cpsn_split;
  double cpsn_alpha = 0.1;
  TrainOptions cpsn_train;
  std::string cpsn_out;
  auto* cpsn_cmd = app.add_subcommand(
      "train-cpsn", "Train the threshold regressor and conformalize it");
  AddSplitOptions(cpsn_cmd, cpsn_split, true);
  cpsn_cmd->add_option("--alpha", cpsn_alpha, "Miscoverage level in (0, 1)")
      ->capture_default_str();
  AddTrainOptions(cpsn_cmd, cpsn_train);
  cpsn_cmd->add_option("--out", cpsn_out,
                       "Artifact path (default $CPTK_OUTPUT_DIR/cpsn.json)");

  // predict
  std::string pred_artifact, pred_data;
  std::vector<std::size_t> pred_rows;
  std::vector<double> pred_probs, pred_features;
  auto* pred_cmd = app.add_subcommand(
      "predict", "Emit prediction sets as JSON lines");
  pred_cmd->add_option("--artifact", pred_artifact,
                       "threshold.json or cpsn.json")
      ->required();
  pred_cmd->add_option("--data", pred_data, "Dataset directory");
  pred_cmd->add_option("--rows", pred_rows, "Row indices (default: all)")
      ->delimiter(',');
  pred_cmd->add_option("--probs", pred_probs,
                       "A single probability vector instead of --data")
      ->delimiter(',');
  pred_cmd->add_option("--features", pred_features,
                       "Feature vector for --probs (cpsn artifacts)")
      ->delimiter(',');

  // eval
  SplitOptions eval_split;
  SynthOptions eval_synth;
  eval_synth.heteroscedastic = true;
  bool eval_synthetic = false;
  std::vector<std::string> eval_methods{"naive", "aps",       "aps_rand",
                                        "raps",  "raps_rand", "cpsn"};
  std::vector<double> eval_alphas{0.1, 0.05};
  std::uint32_t eval_trials = 10;
  std::size_t n_train = 4000, n_val = 2000, n_test = 5000;
  int eval_workers = 0;
  TrainOptions eval_train;
  GridOptions eval_grid;
  std::string eval_out;
  bool eval_quiet = false;
  bool eval_homoscedastic = false;
  auto* eval_cmd = app.add_subcommand(
      "eval", "Repeated-split comparison of methods (table and JSON report)");
  AddSplitOptions(eval_cmd, eval_split, false);
  eval_cmd->add_flag("--synthetic", eval_synthetic,
                     "Use fresh synthetic samples per trial instead of --data");
  eval_cmd->add_option("--k", eval_synth.k, "Synthetic: classes (>= 2)")
      ->check(CLI::Range(2u, 1u << 20))
      ->capture_default_str();
  eval_cmd->add_option("--d", eval_synth.d, "Synthetic: feature dimension")
      ->check(CLI::Range(1u, 1u << 20))
      ->capture_default_str();
  eval_cmd->add_flag("--homoscedastic", eval_homoscedastic,
                     "Synthetic: constant temperature");
  eval_cmd->add_option("--temp-low", eval_synth.temp_low,
                       "Synthetic: lower temperature")
      ->capture_default_str();
  eval_cmd->add_option("--temp-high", eval_synth.temp_high,
                       "Synthetic: upper temperature")
      ->capture_default_str();
  eval_cmd->add_option("--signal", eval_synth.signal,
                       "Synthetic: base logit standard deviation")
      ->capture_default_str();
  eval_cmd->add_option("--distortion", eval_synth.distortion,
                       "Synthetic: none, difficulty-blind, logit-scale")
      ->capture_default_str();
  eval_cmd->add_option("--logit-scale", eval_synth.logit_scale,
                       "Synthetic: factor for logit-scale")
      ->capture_default_str();
  eval_cmd->add_option("--task-seed", eval_synth.seed,
                       "Synthetic: generator parameter seed")
      ->capture_default_str();
  eval_cmd->add_option("--methods", eval_methods, "Comma-separated methods")
      ->delimiter(',')
      ->capture_default_str();
  eval_cmd->add_option("--alphas", eval_alphas, "Comma-separated alpha values")
      ->delimiter(',')
      ->capture_default_str();
  eval_cmd->add_option("--trials", eval_trials, "Number of repeated splits")
      ->capture_default_str();
  eval_cmd->add_option("--n-train", n_train, "Synthetic: training rows")
      ->capture_default_str();
  eval_cmd->add_option("--n-val", n_val, "Synthetic: validation rows")
      ->capture_default_str();
  eval_cmd->add_option("--n-test", n_test, "Synthetic: test rows")
      ->capture_default_str();
  eval_cmd->add_option("--workers", eval_workers,
                       "Parallel trials (0 = available cores)")
      ->capture_default_str();
  AddTrainOptions(eval_cmd, eval_train);
  AddGridOptions(eval_cmd, eval_grid);
  eval_cmd->add_option("--out", eval_out,
                       "JSON report path (default $CPTK_OUTPUT_DIR/report.json)");
  eval_cmd->add_flag("--quiet", eval_quiet, "Do not print the table");

  // inspect
  std::string insp_data, insp_artifact;
  auto* insp_cmd = app.add_subcommand(
      "inspect", "Validate and summarise a dataset or artifact");
  insp_cmd->add_option("--data", insp_data, "Dataset directory");
  insp_cmd->add_option("--artifact", insp_artifact, "Artifact JSON");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  try {
    if (synth_cmd->parsed()) {
      return CmdSynth(synth, synth.n, synth_out, out);
    }
    if (cal_cmd->parsed()) {
      return CmdCalibrate(cal_split, cal_alpha, cal_method, cal_grid,
                          cal_raps_a, cal_raps_b, cal_out, out);
    }
    if (cpsn_cmd->parsed()) {
      return CmdTrainCpsn(cpsn_split, cpsn_alpha, cpsn_train, cpsn_out, out);
    }
    if (pred_cmd->parsed()) {
      return CmdPredict(pred_artifact, pred_data, pred_rows, pred_probs,
                        pred_features, out);
    }
    if (eval_cmd->parsed()) {
      if (eval_homoscedastic) eval_synth.heteroscedastic = false;
      return CmdEval(eval_split, eval_synthetic, eval_synth, eval_methods,
                     eval_alphas, eval_trials, n_train, n_val, n_test,
                     eval_workers, eval_train, eval_grid, eval_out, eval_quiet,
                     out);
    }
    if (insp_cmd->parsed()) {
      return CmdInspect(insp_data, insp_artifact, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    if (e.kind() == ErrorKind::kUsage) err << app.help();
    return ExitCodeFor(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace cptk::cli
