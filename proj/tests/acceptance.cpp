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


// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include "deimos/deimos.hpp"
#include "test_util.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace {

using deimos::Index;
using Clock = std::chrono::steady_clock;

int failures = 0;

// Running tally shared by every randomized check of the brute-force oracle.
struct Dominance {
  long checks = 0;
  long violations = 0;
  long b1_checks = 0;
  long b1_mismatches = 0;
  double worst = 0.0;

  void Add(double greedy, double optimal, Index b) {
    ++checks;
    const double slack = 1e-12 * std::max(1.0, std::abs(optimal));
    if (optimal < greedy - slack) {
      ++violations;
      worst = std::max(worst, greedy - optimal);
    }
    if (b == 1) {
      ++b1_checks;
      if (std::abs(optimal - greedy) > 1e-10 * std::max(1.0, std::abs(optimal))) {
        ++b1_mismatches;
      }
    }
  }
} dominance;

void Report(int id, bool pass, const std::string& detail, Clock::time_point start) {
  const double secs =
      std::chrono::duration<double>(Clock::now() - start).count();
  std::printf("[%s] criterion %d: %s (%.2fs)\n", pass ? "PASS" : "FAIL", id,
              detail.c_str(), secs);
  std::fflush(stdout);
  if (!pass) ++failures;
}

deimos::CovarianceModel FromMatrix(Eigen::MatrixXd m) {
  deimos::CovarianceModel cov;
  cov.num_points = m.rows();
  cov.matrix = std::move(m);
  return cov;
}

void Criterion1() {
  const auto start = Clock::now();
  const auto cov = FromMatrix(deimos::testing::GreedyGapMatrix());
  const auto cands = deimos::CandidateSet::Unlabeled(3);
  const auto greedy = deimos::GreedyBatch(cov, cands, 2);
  const auto brute = deimos::BruteForceBatch(cov, cands, 2);
  const double g = greedy.total_reduction();
  const double o = brute.total_reduction();
  auto sorted = brute.selected;
  std::sort(sorted.begin(), sorted.end());
  // Points are 1-based in the worked example; indices here are 0-based.
  const bool first_is_2 = !greedy.selected.empty() && greedy.selected[0] == 1;
  const bool second_ok = greedy.selected.size() == 2 &&
                         (greedy.selected[1] == 0 || greedy.selected[1] == 2);
  const bool pass = first_is_2 && second_ok && std::abs(g - 16.889) <= 1e-3 &&
                    std::abs(g - 152.0 / 9.0) <= 1e-6 &&
                    sorted == std::vector<Index>{0, 2} &&
                    std::abs(o - 19.636) <= 1e-3 &&
                    std::abs(o - 216.0 / 11.0) <= 1e-6 &&
                    std::abs(g / o - 0.860) <= 1e-3;
  std::ostringstream d;
  d.precision(9);
  d << "greedy picks {" << greedy.selected[0] + 1 << "," << greedy.selected[1] + 1
    << "} reduction " << g << "; brute force {" << sorted[0] + 1 << ","
    << sorted[1] + 1 << "} reduction " << o << "; ratio " << g / o;
  Report(1, pass, d.str(), start);
}

void Criterion2() {
  const auto start = Clock::now();
  struct Setting {
    Index b, s;
  };
  const std::vector<Setting> settings = {{2, 50}, {5, 30}, {10, 20}};
  bool pass = true;
  std::ostringstream d;
  d.precision(6);
  for (const auto& st : settings) {
    for (Index j : {Index{3}, Index{50}}) {
      deimos::synthcov::RatioExperimentConfig config;
      config.trials = 200;
      config.batch_size = st.b;
      config.num_points = st.s;
      config.masks = j;
      config.base_seed = 1000;
      const auto report = deimos::synthcov::RatioExperiment(config);
      for (const auto& t : report.trials) {
        dominance.Add(t.greedy_reduction, t.optimal_reduction, st.b);
      }
      const double frac = report.FractionAtLeast(0.97);
      bool ok = report.min_ratio >= 0.95 && frac >= 0.99;
      if (st.b == 10 && j == 3) ok = ok && report.min_ratio >= 0.9999;
      pass = pass && ok;
      d << " (b=" << st.b << ",S=" << st.s << ",J=" << j
        << ": min " << report.min_ratio << ", >=0.97 " << 100 * frac << "%)";
    }
  }
  Report(2, pass, "ratio study" + d.str(), start);
}

void Criterion3() {
  const auto start = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<Index> dim_dist(1, 20);
  double worst_cond = 0.0;
  double worst_ei = 0.0;
  for (int m = 0; m < 500; ++m) {
    const Index dim = dim_dist(rng);
    const auto cov = FromMatrix(deimos::testing::RandomPsd(dim, rng));
    std::uniform_int_distribution<Index> point(0, dim - 1);
    const Index c = point(rng);
    const auto cond = deimos::ConditionOn(cov, c);
    const auto oracle = deimos::testing::PrecisionConditional(cov.matrix, {c});
    worst_cond = std::max(worst_cond, (cond.matrix - oracle).cwiseAbs().maxCoeff());
    const double ei = deimos::EiRegression(cov, c);
    worst_ei = std::max(worst_ei, std::abs(ei - (cov.trace() - cond.trace())));

    if (dim <= 12) {
      const auto cands = deimos::CandidateSet::Unlabeled(dim);
      for (Index b = 1; b <= std::min<Index>(3, dim); ++b) {
        dominance.Add(deimos::GreedyBatch(cov, cands, b).total_reduction(),
                      deimos::BruteForceBatch(cov, cands, b).total_reduction(), b);
      }
    }
  }
  std::ostringstream d;
  d << "500 matrices; max |condition - oracle| " << worst_cond
    << ", max |EI - trace drop| " << worst_ei;
  Report(3, worst_cond <= 1e-9 && worst_ei <= 1e-10, d.str(), start);
}

void Criterion4() {
  const auto start = Clock::now();
  std::ostringstream d;
  d << dominance.checks << " comparisons, " << dominance.violations
    << " violations (worst " << dominance.worst << "); b=1: "
    << dominance.b1_checks << " comparisons, " << dominance.b1_mismatches
    << " mismatches";
  Report(4,
         dominance.checks > 0 && dominance.violations == 0 &&
             dominance.b1_checks > 0 && dominance.b1_mismatches == 0,
         d.str(), start);
}

Eigen::MatrixXd RandomMatrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = normal(rng);
  return m;
}

void Criterion5() {
  const auto start = Clock::now();
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<Index> width(1, 6);
  std::uniform_int_distribution<Index> depth(1, 3);
  std::uniform_real_distribution<double> prob(0.0, 0.5);
  long params = 0;
  long bad = 0;
  double worst = 0.0;
  for (int n = 0; n < 50; ++n) {
    std::vector<Index> sizes = {width(rng)};
    const Index hidden = depth(rng);
    for (Index h = 0; h < hidden; ++h) sizes.push_back(width(rng) + 1);
    sizes.push_back(std::min<Index>(width(rng), 2));
    auto net = deimos::toy::MakeGaussianNet(sizes, 0.8, rng);
    net.dropout_prob = prob(rng);
    net.weight_decay = 0.01 * prob(rng);
    const Index batch = 5;
    const Eigen::MatrixXd x = RandomMatrix(sizes.front(), batch, rng);
    const Eigen::MatrixXd y = RandomMatrix(sizes.back(), batch, rng);
    const auto masks = n % 2 == 0
                           ? deimos::toy::DrawMaskBatch(net, batch, rng)
                           : deimos::toy::AsBatch(deimos::toy::DrawMasks(net, rng));
    const auto grad = deimos::toy::ComputeLossGradient(net, x, y, masks);
    const double h = 1e-5;
    auto check = [&](double& param, double analytic) {
      const double saved = param;
      param = saved + h;
      const double up = deimos::toy::Loss(net, x, y, masks);
      param = saved - h;
      const double down = deimos::toy::Loss(net, x, y, masks);
      param = saved;
      const double fd = (up - down) / (2 * h);
      const double scale = std::max(std::abs(fd), std::abs(analytic));
      const double err = std::abs(fd - analytic);
      ++params;
      if (scale > 1e-8) worst = std::max(worst, err / scale);
      if (err > 1e-4 * scale + 1e-8) ++bad;
    };
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
      auto& layer = net.layers[k];
      for (Index r = 0; r < layer.weights.rows(); ++r)
        for (Index c = 0; c < layer.weights.cols(); ++c)
          check(layer.weights(r, c), grad.grads[k].weights(r, c));
      for (Index r = 0; r < layer.bias.size(); ++r)
        check(layer.bias(r), grad.grads[k].bias(r));
    }
  }
  std::ostringstream d;
  d << "50 nets, " << params << " parameters, " << bad
    << " outside tolerance, worst relative error " << worst;
  Report(5, bad == 0, d.str(), start);
}

void Criterion6() {
  const auto start = Clock::now();
  std::mt19937_64 rng(6);
  auto net = deimos::toy::MakeDenseNet({1, 32, 32, 1}, 0.3, 1e-3, rng);
  Eigen::MatrixXd x(1, 6);
  x << -1.0, 0.5, 0.5, 2.0, -1.0, 3.0;
  const auto samples = deimos::toy::McPredictSharedMasks(net, x, 40, 11);
  const Eigen::MatrixXd s = deimos::SampleCovariance(samples.values);
  bool corr_ok = true;
  for (auto [a, b] : {std::pair<Index, Index>{1, 2}, {0, 4}}) {
    corr_ok = corr_ok && s(a, a) > 0.0 && s(a, b) == s(a, a) && s(b, b) == s(a, a);
  }
  const double corr = s(1, 2) / std::sqrt(s(1, 1) * s(2, 2));

  auto plain = net;
  plain.dropout_prob = 0.0;
  const double tau_inv = 0.37;
  const auto cov = deimos::EstimateRegressionCovariance(
      deimos::toy::McPredictSharedMasks(plain, x, 25, 12), tau_inv);
  const Eigen::MatrixXd expected = tau_inv * Eigen::MatrixXd::Identity(6, 6);
  const bool p0_ok = cov.matrix == expected;
  std::ostringstream d;
  d.precision(17);
  d << "duplicated-input correlation " << corr
    << (p0_ok ? "; p=0 covariance equals tau_inv*I exactly"
              : "; p=0 covariance differs from tau_inv*I");
  Report(6, corr_ok && p0_ok, d.str(), start);
}

void Criterion7() {
  const auto start = Clock::now();
  deimos::harness::ExperimentConfig config;
  config.batch_size = 5;
  config.iterations = 1;
  config.record_timing = false;
  config.seeds = {0, 1, 2};
  int improved = 0;
  double deimos_sum = 0.0;
  double random_sum = 0.0;
  std::ostringstream d;
  d.precision(5);
  for (std::uint64_t seed : config.seeds) {
    config.method = deimos::Method::kDeimos;
    const auto dl = deimos::harness::RunExperiment(config, seed);
    config.method = deimos::Method::kRandom;
    const auto rl = deimos::harness::RunExperiment(config, seed);
    const double before = dl.records.front().metric;
    const double after = dl.records.back().metric;
    improved += after < before;
    deimos_sum += after;
    random_sum += rl.records.back().metric;
    d << " seed " << seed << ": " << before << " -> " << after << " (random "
      << rl.records.back().metric << ");";
  }
  const double secs =
      std::chrono::duration<double>(Clock::now() - start).count();
  d << " DEIMOS mean " << deimos_sum / 3 << " vs random mean " << random_sum / 3;
  Report(7, improved >= 2 && deimos_sum <= random_sum && secs < 300.0,
         "grid MSE" + d.str(), start);
}

std::string Slurp(const std::string& path) {
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void Criterion8() {
  const auto start = Clock::now();
  std::mt19937_64 rng(88);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto dir = std::filesystem::temp_directory_path();
  bool pass = true;
  std::ostringstream d;
  for (auto kind : {deimos::TaskKind::kRegression, deimos::TaskKind::kClassification}) {
    deimos::PredictionSamples s;
    s.kind = kind;
    s.num_points = 40;
    s.num_classes = kind == deimos::TaskKind::kRegression ? 1 : 3;
    s.seed = 5;
    s.values.resize(30, s.dim());
    for (Index j = 0; j < 30; ++j) {
      for (Index p = 0; p < s.num_points; ++p) {
        if (s.num_classes == 1) {
          s.values(j, p) = normal(rng);
          continue;
        }
        Eigen::Vector3d logits(normal(rng), normal(rng), normal(rng));
        Eigen::Vector3d e = logits.array().exp();
        s.values.row(j).segment(p * 3, 3) = (e / e.sum()).transpose();
      }
    }
    const std::string stem = (dir / ("deimos_accept_" + deimos::ToString(kind))).string();
    deimos::io::WriteSamplesCsv(stem + ".csv", s);
    deimos::io::WriteManifest(stem + ".json", s);
    const auto loaded = deimos::io::ReadSamples(stem + ".csv", stem + ".json");
    for (auto method : {deimos::Method::kDeimos, deimos::Method::kRandom}) {
      deimos::harness::SelectOptions o;
      o.method = method;
      o.batch_size = 4;
      o.labeled = {0, 1, 2};
      o.seed = 31;
      const auto a = deimos::harness::SelectFromSamples(loaded, o);
      const auto b = deimos::harness::SelectFromSamples(
          deimos::io::ReadSamples(stem + ".csv", stem + ".json"), o);
      const auto mem = deimos::harness::SelectFromSamples(s, o);
      pass = pass && a.selected == b.selected && a.selected == mem.selected &&
             a.selected.size() == 4;
    }
#ifdef DEIMOS_CLI_PATH
    const std::string cmd = std::string(DEIMOS_CLI_PATH) + " select --samples " +
                            stem + ".csv --batch 4 --labeled 0,1,2 --seed 31 --out ";
    std::string outs[2];
    for (int r = 0; r < 2; ++r) {
      outs[r] = stem + "_pick" + std::to_string(r) + ".json";
      const int status = std::system((cmd + outs[r] + " >/dev/null 2>&1").c_str());
      pass = pass && WIFEXITED(status) && WEXITSTATUS(status) == 0;
    }
    pass = pass && Slurp(outs[0]) == Slurp(outs[1]) && !Slurp(outs[0]).empty();
#endif
  }
  d << "external-samples round trip (regression and classification, file and "
       "CLI) gives identical picks across runs";
  Report(8, pass, d.str(), start);
}

}  // namespace

int main() {
  const std::pair<int, void (*)()> criteria[] = {
      {1, Criterion1}, {2, Criterion2}, {3, Criterion3}, {4, Criterion4},
      {5, Criterion5}, {6, Criterion6}, {7, Criterion7}, {8, Criterion8}};
  for (const auto& [id, run] : criteria) {
    try {
      run();
    } catch (const std::exception& e) {
      std::printf("[FAIL] criterion %d: exception: %s\n", id, e.what());
      ++failures;
    }
  }
  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
