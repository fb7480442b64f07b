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


// Command-line front end. Exit status: 0 success, 2 validation error,
// 3 numerical error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "deimos/deimos.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

std::string DefaultManifest(const std::string& csv) {
  std::filesystem::path p(csv);
  p.replace_extension(".json");
  return p.string();
}

std::uint64_t SeedOrEnv(std::uint64_t seed) {
  const char* env = std::getenv("DEIMOS_SEED");
  if (env == nullptr || *env == '\0') return seed;
  deimos::harness::ExperimentConfig probe;
  deimos::harness::ApplyEnvironmentOverrides(probe);
  return probe.seeds.front();
}

void WriteJson(const nlohmann::json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) {
    throw deimos::Error(deimos::ErrorCode::kIo, "cannot open " + path);
  }
  out << j.dump(2) << '\n';
}

int RunToy1d(const std::string& config_path) {
  auto config = deimos::harness::ConfigFromJson(
      deimos::io::ReadJsonFile(config_path));
  deimos::harness::ApplyEnvironmentOverrides(config);
  for (const auto& log : deimos::harness::RunExperiments(config)) {
    for (const auto& r : log.records) {
      std::cout << "seed=" << log.seed << " iteration=" << r.iteration
                << " train_size=" << r.train_size << " metric=" << r.metric
                << '\n';
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DEIMOS batch-mode active learning"};
  app.require_subcommand(1);

  std::string config_path;
  auto* toy1d = app.add_subcommand("toy1d", "run the 1-D synthetic experiment");
  toy1d->add_option("--config", config_path, "experiment JSON")->required();

  std::string samples_path, manifest_path, out_path, method = "deimos";
  std::string labeled_text;
  deimos::Index batch = 1;
  deimos::Index pool = 0;
  std::optional<double> tau_inv, tau_s_inv;
  double tau_factor = 0.15, tau_s_factor = 0.005;
  bool force = false;
  std::uint64_t seed = 0;
  auto* select = app.add_subcommand("select", "select a batch from samples");
  select->add_option("--samples", samples_path, "predictions CSV")->required();
  select->add_option("--manifest", manifest_path, "manifest JSON");
  select->add_option("--method", method,
                     "deimos|brute_force|random|max_variance|max_entropy");
  select->add_option("--batch", batch, "batch size");
  select->add_option("--tau-inv", tau_inv, "regression precision inverse");
  select->add_option("--tau-s-inv", tau_s_inv, "classification smoothing");
  select->add_option("--tau-factor", tau_factor,
                     "calibration factor when --tau-inv is absent");
  select->add_option("--tau-s-factor", tau_s_factor,
                     "calibration factor when --tau-s-inv is absent");
  select->add_flag("--force-factors", force, "allow out-of-range factors");
  select->add_option("--labeled", labeled_text,
                     "comma-separated indices excluded from candidates");
  select->add_option("--candidates", pool, "subsample this many candidates");
  select->add_option("--seed", seed, "seed (DEIMOS_SEED overrides)");
  select->add_option("--out", out_path, "output JSON (default stdout)");

  deimos::Index candidate = 0;
  auto* score = app.add_subcommand("score", "EI of one candidate");
  score->add_option("--samples", samples_path, "predictions CSV")->required();
  score->add_option("--manifest", manifest_path, "manifest JSON");
  score->add_option("--candidate", candidate, "point index")->required();
  score->add_option("--tau-inv", tau_inv, "regression precision inverse");
  score->add_option("--tau-s-inv", tau_s_inv, "classification smoothing");

  deimos::synthcov::RatioExperimentConfig ratio;
  std::string ratio_out;
  auto* simulate = app.add_subcommand("simulate-ratio",
                                      "greedy vs optimal on synthetic covariances");
  simulate->add_option("--trials", ratio.trials, "number of trials");
  simulate->add_option("--batch", ratio.batch_size, "batch size");
  simulate->add_option("--points", ratio.num_points, "points per covariance");
  simulate->add_option("--masks", ratio.masks, "samples per point");
  simulate->add_option("--seed", ratio.base_seed, "base seed");
  simulate->add_option("--out", ratio_out, "ratios CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (*toy1d) return RunToy1d(config_path);

    if (manifest_path.empty() && !samples_path.empty()) {
      manifest_path = DefaultManifest(samples_path);
    }

    if (*select) {
      const auto samples = deimos::io::ReadSamples(samples_path, manifest_path);
      deimos::harness::SelectOptions options;
      options.method = deimos::ParseMethod(method);
      options.batch_size = batch;
      options.tau_inv = tau_inv;
      options.tau_s_inv = tau_s_inv;
      options.tau_factor = tau_factor;
      options.tau_s_factor = tau_s_factor;
      options.allow_factor_override = force;
      options.candidate_pool_size = pool;
      options.seed = SeedOrEnv(seed);
      std::stringstream stream(labeled_text);
      std::string field;
      while (std::getline(stream, field, ',')) {
        if (field.empty()) continue;
        try {
          options.labeled.push_back(std::stoll(field));
        } catch (const std::exception&) {
          throw deimos::Error(deimos::ErrorCode::kInvalidArgument,
                              "bad --labeled entry '" + field + "'");
        }
      }
      WriteJson(deimos::ToJson(deimos::harness::SelectFromSamples(samples, options)),
                out_path);
      return 0;
    }

    if (*score) {
      const auto samples = deimos::io::ReadSamples(samples_path, manifest_path);
      const auto cov = deimos::EstimateCovariance(
          samples, tau_inv.value_or(0.0), tau_s_inv.value_or(0.0));
      const double ei = deimos::ExpectedImprovement(cov, candidate);
      WriteJson({{"candidate", candidate}, {"ei", ei}, {"trace", cov.trace()}},
                "-");
      return 0;
    }

    if (*simulate) {
      ratio.base_seed = SeedOrEnv(ratio.base_seed);
      const auto report = deimos::synthcov::RatioExperiment(ratio);
      deimos::synthcov::WriteRatiosCsv(ratio_out, report);
      std::cout << "trials=" << report.trials.size()
                << " min_ratio=" << report.min_ratio
                << " mean_ratio=" << report.mean_ratio << '\n';
      return 0;
    }
  } catch (const deimos::Error& e) {
    std::cerr << "deimos: " << e.what() << '\n';
    return deimos::IsNumerical(e.code()) ? kExitNumerical : kExitValidation;
  }
  return 0;
}
