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


#include "deimos/samples.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <optional>
#include <random>

namespace deimos::io {
namespace {

std::string TempPath(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

TEST(SamplesFile, RoundTripIsExact) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 1e3);
  for (TaskKind kind : {TaskKind::kRegression, TaskKind::kClassification}) {
    PredictionSamples s;
    s.kind = kind;
    s.num_points = 4;
    s.num_classes = kind == TaskKind::kRegression ? 1 : 3;
    s.seed = 1234;
    s.values.resize(5, s.dim());
    for (Index j = 0; j < 5; ++j) {
      for (Index p = 0; p < s.num_points; ++p) {
        if (kind == TaskKind::kRegression) {
          s.values(j, p) = normal(rng);
        } else {
          Eigen::Vector3d w = Eigen::Vector3d::Random().cwiseAbs();
          w /= w.sum();
          s.values.row(j).segment(p * 3, 3) = w.transpose();
        }
      }
    }
    const auto csv = TempPath("deimos_samples.csv");
    const auto manifest = TempPath("deimos_samples.json");
    WriteSamplesCsv(csv, s);
    WriteManifest(manifest, s);
    const auto back = ReadSamples(csv, manifest);
    EXPECT_EQ(back.values, s.values);
    EXPECT_EQ(back.kind, s.kind);
    EXPECT_EQ(back.num_classes, s.num_classes);
    EXPECT_EQ(back.seed, 1234u);
  }
}

TEST(SamplesFile, Header) {
  PredictionSamples s;
  s.kind = TaskKind::kClassification;
  s.num_points = 2;
  s.num_classes = 2;
  EXPECT_EQ(SamplesHeader(s),
            (std::vector<std::string>{"point_0_class_0", "point_0_class_1",
                                      "point_1_class_0", "point_1_class_1"}));
  s.kind = TaskKind::kRegression;
  s.num_classes = 1;
  EXPECT_EQ(SamplesHeader(s), (std::vector<std::string>{"point_0", "point_1"}));
}

void WriteText(const std::string& path, const std::string& text) {
  std::ofstream(path) << text;
}

std::optional<ErrorCode> ReadError(const std::string& csv_text, const std::string& manifest_text) {
  const auto csv = TempPath("deimos_bad.csv");
  const auto manifest = TempPath("deimos_bad.json");
  WriteText(csv, csv_text);
  WriteText(manifest, manifest_text);
  try {
    ReadSamples(csv, manifest);
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

TEST(SamplesFile, Rejections) {
  const std::string manifest =
      R"({"kind":"regression","S":2,"c":1,"J":2,"seed":0})";
  EXPECT_FALSE(ReadError("point_0,point_1\n1,2\n3,4\n", manifest));
  EXPECT_EQ(ReadError("point_0,point_9\n1,2\n3,4\n", manifest),
            ErrorCode::kInvalidData);
  EXPECT_EQ(ReadError("point_0,point_1\n1,2\n3\n", manifest),
            ErrorCode::kInvalidData);
  EXPECT_EQ(ReadError("point_0,point_1\n1,2\n3,abc\n", manifest),
            ErrorCode::kInvalidData);
  EXPECT_EQ(ReadError("point_0,point_1\n1,2\n", manifest), ErrorCode::kInvalidData);
  EXPECT_EQ(ReadError("point_0,point_1\n1,2\n3,inf\n", manifest),
            ErrorCode::kInvalidData);
  EXPECT_EQ(ReadError("point_0_class_0,point_0_class_1\n0.5,0.6\n0.5,0.5\n",
                      R"({"kind":"classification","S":1,"c":2,"J":2})"),
            ErrorCode::kInvalidData);
  EXPECT_EQ(ReadError("x\n", "{not json"), ErrorCode::kInvalidData);
  try {
    ReadSamples("/nonexistent/a.csv", "/nonexistent/a.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
  }
}

TEST(ParseDouble, Decimal) {
  EXPECT_EQ(ParseDouble(" 1.5e-3 "), 1.5e-3);
  EXPECT_EQ(ParseDouble("+2"), 2.0);
  EXPECT_EQ(ParseDouble(FormatDouble(0.1 + 0.2)), 0.1 + 0.2);
  EXPECT_THROW(ParseDouble("1.5x"), Error);
}

}  // namespace
}  // namespace deimos::io
