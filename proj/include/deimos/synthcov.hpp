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


// Synthetic-covariance study of how close greedy batches come to the
// exhaustive optimum.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "deimos/acquisition.hpp"
#include "deimos/covariance.hpp"
#include "deimos/error.hpp"
#include "deimos/samples.hpp"

namespace deimos::synthcov {

// tau_inv is this fraction of the mean per-point sample variance.
inline constexpr double kTauFraction = 0.1;

// J x S i.i.d. standard normal "predictions", their sample covariance, plus
// tau_inv * I.
inline CovarianceModel GenerateSyntheticCovariance(Index num_points,
                                                   Index masks,
                                                   std::mt19937_64& rng) {
  if (masks < 2) {
    throw Error(ErrorCode::kInsufficientSamples, "need J >= 2");
  }
  if (num_points < 1) {
    throw Error(ErrorCode::kInvalidArgument, "need at least one point");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  PredictionSamples samples;
  samples.num_points = num_points;
  samples.values.resize(masks, num_points);
  for (Index j = 0; j < masks; ++j) {
    for (Index s = 0; s < num_points; ++s) samples.values(j, s) = normal(rng);
  }
  const double mean_variance = ColumnVariances(samples.values).mean();
  return EstimateRegressionCovariance(samples, kTauFraction * mean_variance);
}

struct RatioExperimentConfig {
  Index trials = 200;
  Index batch_size = 2;
  Index num_points = 50;
  Index masks = 3;
  std::uint64_t base_seed = 0;
  double subset_cap = kDefaultSubsetCap;
};

struct RatioTrial {
  Index trial = 0;
  std::uint64_t seed = 0;
  double greedy_reduction = 0.0;
  double optimal_reduction = 0.0;
  double ratio = 0.0;
};

struct RatioReport {
  RatioExperimentConfig config;
  std::vector<RatioTrial> trials;
  double min_ratio = 0.0;
  double mean_ratio = 0.0;

  // Fraction of trials whose ratio is at least `threshold`.
  double FractionAtLeast(double threshold) const {
    if (trials.empty()) return 0.0;
    std::size_t count = 0;
    for (const auto& t : trials) count += t.ratio >= threshold;
    return static_cast<double>(count) / static_cast<double>(trials.size());
  }
};

inline void Validate(const RatioExperimentConfig& config) {
  if (config.trials < 1) {
    throw Error(ErrorCode::kInvalidArgument, "trials must be >= 1");
  }
  if (config.batch_size < 1 || config.batch_size > config.num_points) {
    throw Error(ErrorCode::kInvalidArgument, "need 1 <= batch <= points");
  }
  if (config.masks < 2) {
    throw Error(ErrorCode::kInsufficientSamples, "need J >= 2");
  }
  if (BinomialCount(config.num_points, config.batch_size) > config.subset_cap) {
    throw Error(ErrorCode::kCombinatorialBlowup,
                "exhaustive search over C(" +
                    std::to_string(config.num_points) + ", " +
                    std::to_string(config.batch_size) + ") subsets exceeds cap");
  }
}

// Trial t draws from seed base_seed + t, so any trial can be rerun alone.
inline RatioTrial RunRatioTrial(const RatioExperimentConfig& config, Index t) {
  RatioTrial trial;
  trial.trial = t;
  trial.seed = config.base_seed + static_cast<std::uint64_t>(t);
  std::mt19937_64 rng(trial.seed);
  const auto cov =
      GenerateSyntheticCovariance(config.num_points, config.masks, rng);
  const auto candidates = CandidateSet::Unlabeled(config.num_points);
  trial.greedy_reduction =
      GreedyBatch(cov, candidates, config.batch_size).total_reduction();
  trial.optimal_reduction =
      BruteForceBatch(cov, candidates, config.batch_size, config.subset_cap)
          .total_reduction();
  trial.ratio = trial.greedy_reduction / trial.optimal_reduction;
  return trial;
}

inline RatioReport RatioExperiment(const RatioExperimentConfig& config) {
  Validate(config);
  RatioReport report;
  report.config = config;
  report.min_ratio = std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (Index t = 0; t < config.trials; ++t) {
    report.trials.push_back(RunRatioTrial(config, t));
    report.min_ratio = std::min(report.min_ratio, report.trials.back().ratio);
    sum += report.trials.back().ratio;
  }
  report.mean_ratio = sum / static_cast<double>(config.trials);
  return report;
}

inline void WriteRatiosCsv(const std::string& path, const RatioReport& report) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path + " for writing");
  out << "trial,seed,greedy_reduction,optimal_reduction,ratio\n";
  for (const auto& t : report.trials) {
    out << t.trial << ',' << t.seed << ',' << io::FormatDouble(t.greedy_reduction)
        << ',' << io::FormatDouble(t.optimal_reduction) << ','
        << io::FormatDouble(t.ratio) << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path);
}

}  // namespace deimos::synthcov
