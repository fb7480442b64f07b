// Copyright 2026 The Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Active-learning experiment driver: representative-sample selection,
// precision calibration, acquisition, oracle labelling, retraining from
// scratch, and metrics export.

#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "deimos/acquisition.hpp"
#include "deimos/covariance.hpp"
#include "deimos/error.hpp"
#include "deimos/samples.hpp"
#include "deimos/toymodel.hpp"

namespace deimos::harness {

inline constexpr double kTauFactorMin = 0.1;
inline constexpr double kTauFactorMax = 0.2;
inline constexpr double kTauSFactorMin = 0.001;
inline constexpr double kTauSFactorMax = 0.01;

enum class Task { kSynthetic1d, kExternalSamples };

inline std::string ToString(Task t) {
  return t == Task::kSynthetic1d ? "1d-synthetic" : "external-samples";
}

inline Task ParseTask(const std::string& text) {
  if (text == "1d-synthetic") return Task::kSynthetic1d;
  if (text == "external-samples") return Task::kExternalSamples;
  throw Error(ErrorCode::kInvalidArgument, "unknown task '" + text + "'");
}

struct ExperimentConfig {
  Task task = Task::kSynthetic1d;
  Index initial_train_size = 40;
  Index iterations = 1;
  Index batch_size = 5;
  Index candidate_pool_size = 100;
  Method method = Method::kDeimos;
  Index masks = 50;
  double tau_factor = 0.15;
  double tau_s_factor = 0.005;
  bool allow_factor_override = false;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  bool record_timing = true;
  std::string output_prefix;  // "" disables file output

  // 1d-synthetic task.
  Index pool_size = 200;
  Index validation_size = 40;
  Index grid_size = 1001;
  double noise_sd = 0.3;
  toy::GeneratorConfig generator;
  std::vector<Index> hidden = {256, 256, 256};
  double dropout_prob = 0.2;
  double weight_decay = 0.0005;
  double input_scale = 10.0;
  toy::TrainConfig train = {.epochs = 1000, .learning_rate = 0.003, .batch_size = 32};

  // external-samples task.
  std::string samples_path;
  std::string manifest_path;
  std::optional<double> tau_inv;
  std::optional<double> tau_s_inv;
  std::vector<Index> labeled;
};

inline void CheckFactor(double factor, double lo, double hi, bool allow,
                        const char* name) {
  if (!(factor >= 0.0) || !std::isfinite(factor)) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string(name) + " must be finite and >= 0");
  }
  if (!allow && (factor < lo || factor > hi)) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string(name) + " = " + std::to_string(factor) +
                    " is outside [" + std::to_string(lo) + ", " +
                    std::to_string(hi) + "]; set the override flag to force it");
  }
}

inline void Validate(const ExperimentConfig& c) {
  if (c.batch_size < 1) {
    throw Error(ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  }
  if (c.iterations < 0 || c.initial_train_size < 0) {
    throw Error(ErrorCode::kInvalidArgument, "negative size or iteration count");
  }
  if (c.batch_size > c.candidate_pool_size) {
    throw Error(ErrorCode::kInvalidArgument,
                "batch_size exceeds candidate_pool_size");
  }
  if (c.masks < 2) throw Error(ErrorCode::kInsufficientSamples, "need J >= 2");
  if (c.seeds.empty()) throw Error(ErrorCode::kInvalidArgument, "no seeds");
  CheckFactor(c.tau_factor, kTauFactorMin, kTauFactorMax,
              c.allow_factor_override, "tau_factor");
  CheckFactor(c.tau_s_factor, kTauSFactorMin, kTauSFactorMax,
              c.allow_factor_override, "tau_s_factor");
  if (c.task == Task::kSynthetic1d) {
    if (c.method == Method::kMaxEntropy) {
      throw Error(ErrorCode::kInvalidArgument,
                  "max_entropy needs class probabilities; 1d-synthetic is "
                  "regression");
    }
    if (c.initial_train_size < 1 || c.validation_size < 2 ||
        c.grid_size < 2) {
      throw Error(ErrorCode::kInvalidArgument,
                  "1d-synthetic needs a training set, >= 2 validation points "
                  "and a grid");
    }
    if (c.candidate_pool_size > c.pool_size ||
        c.batch_size * c.iterations > c.pool_size) {
      throw Error(ErrorCode::kInvalidArgument,
                  "pool is too small for the requested acquisitions");
    }
    if (!(c.input_scale > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "input_scale must be > 0");
    }
  } else if (c.samples_path.empty() || c.manifest_path.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "external-samples needs samples_path and manifest_path");
  }
}

inline nlohmann::json ToJson(const ExperimentConfig& c) {
  nlohmann::json j = {
      {"task", ToString(c.task)},
      {"initial_train_size", c.initial_train_size},
      {"iterations", c.iterations},
      {"batch_size", c.batch_size},
      {"candidate_pool_size", c.candidate_pool_size},
      {"method", ToString(c.method)},
      {"J", c.masks},
      {"tau_factor", c.tau_factor},
      {"tau_s_factor", c.tau_s_factor},
      {"allow_factor_override", c.allow_factor_override},
      {"seeds", c.seeds},
      {"record_timing", c.record_timing},
      {"output_prefix", c.output_prefix},
      {"pool_size", c.pool_size},
      {"validation_size", c.validation_size},
      {"grid_size", c.grid_size},
      {"noise_sd", c.noise_sd},
      {"generator",
       {{"hidden", c.generator.hidden},
        {"param_sd", c.generator.param_sd},
        {"x_min", c.generator.x_min},
        {"x_max", c.generator.x_max},
        {"standardize", c.generator.standardize}}},
      {"hidden", c.hidden},
      {"dropout_prob", c.dropout_prob},
      {"weight_decay", c.weight_decay},
      {"input_scale", c.input_scale},
      {"train",
       {{"epochs", c.train.epochs},
        {"learning_rate", c.train.learning_rate},
        {"batch_size", c.train.batch_size}}},
      {"samples_path", c.samples_path},
      {"manifest_path", c.manifest_path},
      {"labeled", c.labeled},
  };
  if (c.tau_inv) j["tau_inv"] = *c.tau_inv;
  if (c.tau_s_inv) j["tau_s_inv"] = *c.tau_s_inv;
  return j;
}

// Missing keys keep their defaults.
inline ExperimentConfig ConfigFromJson(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    if (j.contains("task")) c.task = ParseTask(j["task"].get<std::string>());
    c.initial_train_size = j.value("initial_train_size", c.initial_train_size);
    c.iterations = j.value("iterations", c.iterations);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.candidate_pool_size = j.value("candidate_pool_size", c.candidate_pool_size);
    if (j.contains("method")) c.method = ParseMethod(j["method"].get<std::string>());
    c.masks = j.value("J", c.masks);
    c.tau_factor = j.value("tau_factor", c.tau_factor);
    c.tau_s_factor = j.value("tau_s_factor", c.tau_s_factor);
    c.allow_factor_override =
        j.value("allow_factor_override", c.allow_factor_override);
    c.seeds = j.value("seeds", c.seeds);
    c.record_timing = j.value("record_timing", c.record_timing);
    c.output_prefix = j.value("output_prefix", c.output_prefix);
    c.pool_size = j.value("pool_size", c.pool_size);
    c.validation_size = j.value("validation_size", c.validation_size);
    c.grid_size = j.value("grid_size", c.grid_size);
    c.noise_sd = j.value("noise_sd", c.noise_sd);
    if (j.contains("generator")) {
      const auto& g = j["generator"];
      c.generator.hidden = g.value("hidden", c.generator.hidden);
      c.generator.param_sd = g.value("param_sd", c.generator.param_sd);
      c.generator.x_min = g.value("x_min", c.generator.x_min);
      c.generator.x_max = g.value("x_max", c.generator.x_max);
      c.generator.standardize = g.value("standardize", c.generator.standardize);
    }
    c.hidden = j.value("hidden", c.hidden);
    c.dropout_prob = j.value("dropout_prob", c.dropout_prob);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.input_scale = j.value("input_scale", c.input_scale);
    if (j.contains("train")) {
      const auto& t = j["train"];
      c.train.epochs = t.value("epochs", c.train.epochs);
      c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
      c.train.batch_size = t.value("batch_size", c.train.batch_size);
    }
    c.samples_path = j.value("samples_path", c.samples_path);
    c.manifest_path = j.value("manifest_path", c.manifest_path);
    if (j.contains("tau_inv")) c.tau_inv = j["tau_inv"].get<double>();
    if (j.contains("tau_s_inv")) c.tau_s_inv = j["tau_s_inv"].get<double>();
    c.labeled = j.value("labeled", c.labeled);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("config: ") + e.what());
  }
  return c;
}

// DEIMOS_SEED, when set, replaces the configured seeds with a single seed.
inline void ApplyEnvironmentOverrides(ExperimentConfig& c) {
  const char* env = std::getenv("DEIMOS_SEED");
  if (env == nullptr || *env == '\0') return;
  try {
    std::size_t used = 0;
    const auto seed = std::stoull(env, &used);
    if (used != std::string(env).size()) throw std::invalid_argument(env);
    c.seeds = {seed};
  } catch (const std::exception&) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string("DEIMOS_SEED is not an integer: ") + env);
  }
}

// splitmix64 over (seed, stream, step): independent, reproducible sub-seeds.
inline std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t stream,
                                std::uint64_t step = 0) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ stream) ^ step);
}

enum SeedStream : std::uint64_t {
  kDataStream = 1,
  kInitStream,
  kTrainStream,
  kSampleStream,
  kCovarianceStream,
  kRandomStream,
  kCalibrationStream,
};

struct RepresentativeSet {
  std::vector<Index> points;     // X_samp, in draw order
  std::vector<bool> is_labeled;  // parallel to points

  std::vector<Index> unlabeled_positions() const {
    std::vector<Index> out;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!is_labeled[i]) out.push_back(static_cast<Index>(i));
    }
    return out;
  }
};

// Draws from train U pool without replacement until the unlabeled part of
// the sample holds exactly `target_candidates` points.
inline RepresentativeSet SampleRepresentativeSet(
    const std::vector<Index>& train, const std::vector<Index>& pool,
    Index target_candidates, std::mt19937_64& rng) {
  if (target_candidates < 0 ||
      static_cast<std::size_t>(target_candidates) > pool.size()) {
    throw Error(ErrorCode::kUnattainableTarget,
                "cannot draw " + std::to_string(target_candidates) +
                    " candidates from a pool of " + std::to_string(pool.size()));
  }
  std::vector<std::pair<Index, bool>> all;
  for (Index i : train) all.emplace_back(i, true);
  for (Index i : pool) all.emplace_back(i, false);
  std::shuffle(all.begin(), all.end(), rng);
  RepresentativeSet set;
  Index unlabeled = 0;
  for (const auto& [index, labeled] : all) {
    if (unlabeled == target_candidates) break;
    set.points.push_back(index);
    set.is_labeled.push_back(labeled);
    unlabeled += labeled ? 0 : 1;
  }
  return set;
}

inline double MeanVariance(const PredictionSamples& samples) {
  return ColumnVariances(samples.values).mean();
}

// tau_inv = factor x mean per-point dropout variance on validation points.
inline double CalibrateTauInv(const PredictionSamples& validation,
                              double factor, bool allow_override = false) {
  CheckFactor(factor, kTauFactorMin, kTauFactorMax, allow_override,
              "tau_factor");
  return factor * MeanVariance(validation);
}

// tau_s_inv = factor x mean dropout variance over classes and points.
inline double CalibrateTauSInv(const PredictionSamples& validation,
                               double factor, bool allow_override = false) {
  CheckFactor(factor, kTauSFactorMin, kTauSFactorMax, allow_override,
              "tau_s_factor");
  return factor * MeanVariance(validation);
}

struct IterationRecord {
  Index iteration = 0;
  Index train_size = 0;
  double metric = 0.0;   // grid MSE for 1d-synthetic
  double seconds = 0.0;  // acquisition wall time
  std::uint64_t seed = 0;  // covariance (mask) seed
  std::optional<AcquisitionResult> acquisition;  // dataset indices
};

struct MetricsLog {
  ExperimentConfig config;
  std::uint64_t seed = 0;
  double tau_inv = 0.0;
  double tau_s_inv = 0.0;
  std::vector<IterationRecord> records;
};

inline std::string SidecarPath(const std::string& csv_path) {
  std::filesystem::path p(csv_path);
  p.replace_extension(".json");
  return p.string();
}

inline void ExportMetrics(const MetricsLog& log, const std::string& path) {
  {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::kIo, "cannot open " + path + " for writing");
    out << "iteration,train_size,metric,seconds,seed\n";
    for (const auto& r : log.records) {
      out << r.iteration << ',' << r.train_size << ','
          << io::FormatDouble(r.metric) << ',' << io::FormatDouble(r.seconds)
          << ',' << r.seed << '\n';
    }
    if (!out) throw Error(ErrorCode::kIo, "failed writing " + path);
  }
  nlohmann::json acquisitions = nlohmann::json::array();
  for (const auto& r : log.records) {
    if (r.acquisition) {
      auto j = ToJson(*r.acquisition);
      j["iteration"] = r.iteration;
      acquisitions.push_back(j);
    }
  }
  const nlohmann::json sidecar = {{"config", ToJson(log.config)},
                                  {"seed", log.seed},
                                  {"tau_inv", log.tau_inv},
                                  {"tau_s_inv", log.tau_s_inv},
                                  {"acquisitions", acquisitions}};
  const auto sidecar_path = SidecarPath(path);
  std::ofstream out(sidecar_path);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + sidecar_path);
  out << sidecar.dump(2) << '\n';
}

// Parses the CSV written by ExportMetrics (acquisitions are not restored).
inline std::vector<IterationRecord> ReadMetricsCsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line) ||
      line != "iteration,train_size,metric,seconds,seed") {
    throw Error(ErrorCode::kInvalidData, path + ": unexpected header");
  }
  std::vector<IterationRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = io::SplitCsvLine(line);
    if (f.size() != 5) {
      throw Error(ErrorCode::kInvalidData, path + ": malformed row");
    }
    IterationRecord r;
    try {
      r.iteration = std::stoll(f[0]);
      r.train_size = std::stoll(f[1]);
      r.seed = std::stoull(f[4]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidData, path + ": malformed integer");
    }
    r.metric = io::ParseDouble(f[2]);
    r.seconds = io::ParseDouble(f[3]);
    records.push_back(std::move(r));
  }
  return records;
}

namespace detail {

inline CandidateSet CandidatesFor(const CovarianceModel& cov,
                                  const std::vector<Index>& labeled,
                                  Index pool_size, std::uint64_t seed) {
  auto candidates = CandidateSet::Unlabeled(cov.num_points, labeled);
  if (pool_size > 0 && static_cast<std::size_t>(pool_size) < candidates.size()) {
    std::mt19937_64 rng(seed);
    std::shuffle(candidates.indices.begin(), candidates.indices.end(), rng);
    candidates.indices.resize(static_cast<std::size_t>(pool_size));
    std::sort(candidates.indices.begin(), candidates.indices.end());
    candidates.provenance = CandidateSet::Provenance::kSubsampled;
  }
  return candidates;
}

}  // namespace detail

// Runs one acquisition method over a covariance. Trajectories for the
// baselines are the realized trace drops of conditioning on their picks.
inline AcquisitionResult Acquire(Method method, const CovarianceModel& cov,
                                 const CandidateSet& candidates, Index b,
                                 std::uint64_t seed,
                                 const Eigen::MatrixXd* mean_probs = nullptr) {
  AcquisitionResult result;
  switch (method) {
    case Method::kDeimos:
      result = GreedyBatch(cov, candidates, b);
      break;
    case Method::kBruteForce:
      return BruteForceBatch(cov, candidates, b);
    case Method::kRandom:
      ValidateCandidates(candidates, cov.num_points, cov.conditioned_indices);
      result = BaselineRandom(candidates, b, seed);
      AttachTrajectory(result, cov);
      break;
    case Method::kMaxVariance:
      result = BaselineMaxVariance(cov, candidates, b);
      AttachTrajectory(result, cov);
      break;
    case Method::kMaxEntropy:
      if (mean_probs == nullptr) {
        throw Error(ErrorCode::kInvalidArgument,
                    "max_entropy needs mean class probabilities");
      }
      result = BaselineMaxEntropy(*mean_probs, candidates, b);
      AttachTrajectory(result, cov);
      break;
  }
  result.seed = seed;
  return result;
}

struct SelectOptions {
  Method method = Method::kDeimos;
  Index batch_size = 1;
  std::optional<double> tau_inv;    // calibrated from the samples if unset
  std::optional<double> tau_s_inv;  // likewise
  double tau_factor = 0.15;
  double tau_s_factor = 0.005;
  bool allow_factor_override = false;
  std::vector<Index> labeled;
  Index candidate_pool_size = 0;  // 0 = every unlabeled point
  std::uint64_t seed = 0;
};

// External-samples path: covariance from user-supplied predictions, then
// one acquisition over the unlabeled points.
inline AcquisitionResult SelectFromSamples(const PredictionSamples& samples,
                                           const SelectOptions& options) {
  deimos::Validate(samples);
  double tau_inv = 0.0;
  double tau_s_inv = 0.0;
  if (samples.kind == TaskKind::kRegression) {
    tau_inv = options.tau_inv ? *options.tau_inv
                              : CalibrateTauInv(samples, options.tau_factor,
                                                options.allow_factor_override);
  } else {
    tau_s_inv = options.tau_s_inv
                    ? *options.tau_s_inv
                    : CalibrateTauSInv(samples, options.tau_s_factor,
                                       options.allow_factor_override);
  }
  const auto cov = EstimateCovariance(samples, tau_inv, tau_s_inv);
  for (Index i : options.labeled) deimos::detail::CheckPoint(cov, i);
  const auto candidates = detail::CandidatesFor(
      cov, options.labeled, options.candidate_pool_size,
      DeriveSeed(options.seed, kSampleStream));
  const Eigen::MatrixXd mean = MeanPredictions(samples);
  return Acquire(options.method, cov, candidates, options.batch_size,
                 options.seed, &mean);
}

// Labels live here and are handed out only for revealed indices.
class OracleDataset {
 public:
  OracleDataset(Eigen::RowVectorXd inputs, Eigen::RowVectorXd labels)
      : inputs_(std::move(inputs)), labels_(std::move(labels)) {}

  const Eigen::RowVectorXd& inputs() const { return inputs_; }
  std::vector<Index> train, pool, validation;

  toy::Dataset Labeled() const {
    toy::Dataset d;
    d.inputs = inputs_(Eigen::all, train);
    d.targets = labels_(Eigen::all, train);
    return d;
  }

  // Moves pool points into the training set.
  void Reveal(const std::vector<Index>& indices) {
    for (Index i : indices) {
      auto it = std::find(pool.begin(), pool.end(), i);
      if (it == pool.end()) {
        throw Error(ErrorCode::kInvalidArgument,
                    "index " + std::to_string(i) + " is not in the pool");
      }
      pool.erase(it);
      train.push_back(i);
    }
  }

 private:
  Eigen::RowVectorXd inputs_;
  Eigen::RowVectorXd labels_;
};

namespace detail {

struct Synthetic1d {
  toy::Generator1d generator;
  OracleDataset data;
  Eigen::RowVectorXd grid;
  Eigen::RowVectorXd grid_truth;
};

inline Synthetic1d MakeSynthetic1d(const ExperimentConfig& c,
                                   std::uint64_t seed) {
  std::mt19937_64 rng(DeriveSeed(seed, kDataStream));
  auto gen = toy::MakeGenerator1d(c.generator, rng);
  const Index total = c.initial_train_size + c.validation_size + c.pool_size;
  const auto x = toy::UniformInputs(gen, total, rng);
  auto observed = toy::Observe(gen, x, c.noise_sd, rng);
  OracleDataset data(x, observed.targets.row(0));
  for (Index i = 0; i < total; ++i) {
    if (i < c.initial_train_size) {
      data.train.push_back(i);
    } else if (i < c.initial_train_size + c.validation_size) {
      data.validation.push_back(i);
    } else {
      data.pool.push_back(i);
    }
  }
  Eigen::RowVectorXd grid = toy::Grid(gen.x_min, gen.x_max, c.grid_size);
  Eigen::RowVectorXd truth = gen(grid);
  return {std::move(gen), std::move(data), std::move(grid), std::move(truth)};
}

inline toy::DenseNet TrainFromScratch(const ExperimentConfig& c,
                                      const toy::Dataset& labeled,
                                      std::uint64_t seed, Index iteration) {
  std::vector<Index> sizes = {1};
  sizes.insert(sizes.end(), c.hidden.begin(), c.hidden.end());
  sizes.push_back(1);
  std::mt19937_64 init(DeriveSeed(seed, kInitStream,
                                  static_cast<std::uint64_t>(iteration)));
  auto net = toy::MakeDenseNet(sizes, c.dropout_prob, c.weight_decay, init);
  toy::TrainConfig tc = c.train;
  tc.seed = DeriveSeed(seed, kTrainStream, static_cast<std::uint64_t>(iteration));
  toy::Dataset scaled = labeled;
  scaled.inputs /= c.input_scale;
  return toy::Train(std::move(net), scaled, tc).net;
}

inline double GridMse(const ExperimentConfig& c, const toy::DenseNet& net,
                      const Synthetic1d& task) {
  const Eigen::RowVectorXd pred =
      toy::Forward(net, task.grid / c.input_scale).row(0);
  return (pred - task.grid_truth).squaredNorm() /
         static_cast<double>(task.grid.size());
}

inline MetricsLog RunSynthetic1d(const ExperimentConfig& c, std::uint64_t seed) {
  MetricsLog log;
  log.config = c;
  log.seed = seed;
  auto task = MakeSynthetic1d(c, seed);
  auto flush = [&] {
    if (!c.output_prefix.empty()) {
      ExportMetrics(log, c.output_prefix + "_seed" + std::to_string(seed) +
                             ".csv");
    }
  };

  auto net = TrainFromScratch(c, task.data.Labeled(), seed, 0);
  log.records.push_back({0, static_cast<Index>(task.data.train.size()),
                         GridMse(c, net, task), 0.0, 0, std::nullopt});

  // Calibrated once on the initial model and held fixed.
  {
    const Eigen::MatrixXd val =
        task.data.inputs()(Eigen::all, task.data.validation) / c.input_scale;
    const auto samples = toy::McPredictSharedMasks(
        net, val, c.masks, DeriveSeed(seed, kCalibrationStream));
    log.tau_inv = CalibrateTauInv(samples, c.tau_factor, c.allow_factor_override);
  }
  flush();

  for (Index it = 1; it <= c.iterations; ++it) {
    const auto step = static_cast<std::uint64_t>(it);
    std::mt19937_64 sample_rng(DeriveSeed(seed, kSampleStream, step));
    const auto samp = SampleRepresentativeSet(
        task.data.train, task.data.pool, c.candidate_pool_size, sample_rng);
    const Eigen::MatrixXd inputs =
        task.data.inputs()(Eigen::all, samp.points) / c.input_scale;
    const std::uint64_t cov_seed = DeriveSeed(seed, kCovarianceStream, step);

    const auto start = std::chrono::steady_clock::now();
    const auto samples =
        toy::McPredictSharedMasks(net, inputs, c.masks, cov_seed);
    const auto cov = EstimateRegressionCovariance(samples, log.tau_inv);
    CandidateSet candidates;
    candidates.indices = samp.unlabeled_positions();
    auto picked = Acquire(c.method, cov, candidates, c.batch_size,
                          DeriveSeed(seed, kRandomStream, step));
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();

    std::vector<Index> chosen;
    for (Index pos : picked.selected) {
      chosen.push_back(samp.points[static_cast<std::size_t>(pos)]);
    }
    task.data.Reveal(chosen);
    picked.selected = chosen;

    net = TrainFromScratch(c, task.data.Labeled(), seed, it);
    log.records.push_back({it, static_cast<Index>(task.data.train.size()),
                           GridMse(c, net, task),
                           c.record_timing ? seconds : 0.0, cov_seed,
                           std::move(picked)});
    flush();
  }
  return log;
}

inline MetricsLog RunExternal(const ExperimentConfig& c, std::uint64_t seed) {
  MetricsLog log;
  log.config = c;
  log.seed = seed;
  const auto samples = io::ReadSamples(c.samples_path, c.manifest_path);
  SelectOptions options;
  options.method = c.method;
  options.batch_size = c.batch_size;
  options.tau_inv = c.tau_inv;
  options.tau_s_inv = c.tau_s_inv;
  options.tau_factor = c.tau_factor;
  options.tau_s_factor = c.tau_s_factor;
  options.allow_factor_override = c.allow_factor_override;
  options.labeled = c.labeled;
  options.candidate_pool_size = c.candidate_pool_size;
  options.seed = seed;
  const auto start = std::chrono::steady_clock::now();
  auto picked = SelectFromSamples(samples, options);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  log.records.push_back(
      {1, static_cast<Index>(c.labeled.size()) + c.batch_size,
       std::numeric_limits<double>::quiet_NaN(),
       c.record_timing ? seconds : 0.0, samples.seed, std::move(picked)});
  if (!c.output_prefix.empty()) {
    ExportMetrics(log, c.output_prefix + "_seed" + std::to_string(seed) + ".csv");
  }
  return log;
}

}  // namespace detail

// One repetition. With output_prefix set, the log is re-exported after every
// iteration so a failure leaves the completed part on disk.
inline MetricsLog RunExperiment(const ExperimentConfig& config,
                                std::uint64_t seed) {
  Validate(config);
  return config.task == Task::kSynthetic1d
             ? detail::RunSynthetic1d(config, seed)
             : detail::RunExternal(config, seed);
}

inline std::vector<MetricsLog> RunExperiments(const ExperimentConfig& config) {
  Validate(config);
  std::vector<MetricsLog> logs;
  for (std::uint64_t seed : config.seeds) logs.push_back(RunExperiment(config, seed));
  return logs;
}

}  // namespace deimos::harness
