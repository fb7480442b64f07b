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


#include "deimos/deimos.hpp"

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#ifndef DEIMOS_CLI_PATH
#error "DEIMOS_CLI_PATH must name the deimos executable"
#endif

namespace deimos {
namespace {

std::string TempPath(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

int RunCli(const std::string& args) {
  const std::string cmd =
      std::string(DEIMOS_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string Capture(const std::string& args) {
  const std::string cmd = std::string(DEIMOS_CLI_PATH) + " " + args + " 2>/dev/null";
  std::string out;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return out;
  char buf[256];
  while (fgets(buf, sizeof(buf), pipe) != nullptr) out += buf;
  pclose(pipe);
  return out;
}

std::string Slurp(const std::string& path) {
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Writes a regression samples file whose point 0 never varies.
std::string WriteSamples(const std::string& tag) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> normal(0.0, 1.0);
  PredictionSamples s;
  s.num_points = 15;
  s.values.resize(10, 15);
  for (Index j = 0; j < 10; ++j) {
    for (Index p = 0; p < 15; ++p) s.values(j, p) = p == 0 ? 1.0 : normal(rng);
  }
  const auto csv = TempPath("deimos_cli_" + tag + ".csv");
  io::WriteSamplesCsv(csv, s);
  io::WriteManifest(TempPath("deimos_cli_" + tag + ".json"), s);
  return csv;
}

TEST(Cli, SelectIsDeterministic) {
  const auto csv = WriteSamples("select");
  const auto a = TempPath("deimos_cli_a.json");
  const auto b = TempPath("deimos_cli_b.json");
  const std::string args = "select --samples " + csv +
                           " --batch 3 --tau-inv 0.1 --labeled 1,2 --out ";
  ASSERT_EQ(RunCli(args + a), 0);
  ASSERT_EQ(RunCli(args + b), 0);
  EXPECT_EQ(Slurp(a), Slurp(b));
  const auto picked = nlohmann::json::parse(Slurp(a));
  EXPECT_EQ(picked.at("selected").size(), 3u);
  for (const auto& i : picked.at("selected")) {
    EXPECT_NE(i.get<int>(), 1);
    EXPECT_NE(i.get<int>(), 2);
  }
}

TEST(Cli, Score) {
  const auto csv = WriteSamples("score");
  const auto j = nlohmann::json::parse(
      Capture("score --samples " + csv + " --candidate 4 --tau-inv 0.1"));
  const auto samples =
      io::ReadSamples(csv, TempPath("deimos_cli_score.json"));
  const auto cov = EstimateRegressionCovariance(samples, 0.1);
  EXPECT_DOUBLE_EQ(j.at("ei").get<double>(), ExpectedImprovement(cov, 4));
}

TEST(Cli, ExitCodes) {
  const auto csv = WriteSamples("exit");
  EXPECT_EQ(RunCli("select --samples " + csv + " --batch 99 --tau-inv 0.1"), 2);
  EXPECT_EQ(RunCli("select --samples " + csv + " --batch 0 --tau-inv 0.1"), 0);
  EXPECT_EQ(RunCli("select --samples " + csv + " --method bald"), 2);
  EXPECT_EQ(RunCli("select --samples /nonexistent.csv"), 2);
  EXPECT_EQ(RunCli("select --samples " + csv + " --tau-factor 0.5"), 2);
  EXPECT_EQ(RunCli("select --samples " + csv + " --tau-factor 0.5 --force-factors"), 0);
  EXPECT_EQ(RunCli("bogus"), 2);
  EXPECT_EQ(RunCli("score --samples " + csv + " --candidate 0 --tau-inv 0"), 3);
  EXPECT_EQ(RunCli("score --samples " + csv + " --candidate 99 --tau-inv 0.1"), 2);
}

TEST(Cli, SimulateRatio) {
  const auto out = TempPath("deimos_cli_ratios.csv");
  ASSERT_EQ(RunCli("simulate-ratio --trials 4 --batch 2 --points 8 --masks 3 "
                "--seed 1 --out " + out),
            0);
  const auto text = Slurp(out);
  EXPECT_EQ(text.rfind("trial,seed,greedy_reduction,optimal_reduction,ratio\n", 0),
            0u);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
}

TEST(Cli, Toy1d) {
  harness::ExperimentConfig c;
  c.initial_train_size = 10;
  c.iterations = 1;
  c.batch_size = 2;
  c.candidate_pool_size = 10;
  c.pool_size = 20;
  c.validation_size = 10;
  c.grid_size = 51;
  c.masks = 5;
  c.hidden = {8};
  c.train.epochs = 5;
  c.seeds = {1};
  const auto path = TempPath("deimos_cli_toy1d.json");
  std::ofstream(path) << harness::ToJson(c).dump();
  EXPECT_EQ(RunCli("toy1d --config " + path), 0);
  std::ofstream(path) << R"({"batch_size": 0})";
  EXPECT_EQ(RunCli("toy1d --config " + path), 2);
}

}  // namespace
}  // namespace deimos
