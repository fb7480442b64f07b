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


// Fixed-mask Monte-Carlo dropout prediction samples and their on-disk form:
// a CSV body (one row per mask realization) plus a JSON manifest.

#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "deimos/error.hpp"

namespace deimos {

using Index = Eigen::Index;

enum class TaskKind { kRegression, kClassification };

inline std::string ToString(TaskKind kind) {
  return kind == TaskKind::kRegression ? "regression" : "classification";
}

inline TaskKind ParseTaskKind(const std::string& text) {
  if (text == "regression") return TaskKind::kRegression;
  if (text == "classification") return TaskKind::kClassification;
  throw Error(ErrorCode::kInvalidData, "unknown task kind '" + text + "'");
}

// J mask realizations (rows) by D = S*c outputs (columns). Columns are
// point-major: point 0 classes 0..c-1, then point 1, and so on.
struct PredictionSamples {
  TaskKind kind = TaskKind::kRegression;
  Eigen::MatrixXd values;
  Index num_points = 0;
  Index num_classes = 1;
  std::uint64_t seed = 0;

  Index mask_count() const { return values.rows(); }
  Index dim() const { return num_points * num_classes; }
  Index column(Index point, Index cls = 0) const {
    return point * num_classes + cls;
  }
};

inline constexpr double kSimplexTolerance = 1e-6;

// Checks shape, finiteness and (for classification) the per-point simplex
// constraint. Does not enforce J >= 2; estimators report that separately.
inline void Validate(const PredictionSamples& samples) {
  if (samples.num_points < 0 || samples.num_classes < 1) {
    throw Error(ErrorCode::kInvalidData, "non-positive point/class count");
  }
  if (samples.kind == TaskKind::kRegression && samples.num_classes != 1) {
    throw Error(ErrorCode::kInvalidData,
                "regression samples must have exactly one output per point");
  }
  if (samples.values.cols() != samples.dim()) {
    throw Error(ErrorCode::kInvalidData,
                "sample matrix has " + std::to_string(samples.values.cols()) +
                    " columns, expected " + std::to_string(samples.dim()));
  }
  if (!samples.values.allFinite()) {
    throw Error(ErrorCode::kInvalidData, "non-finite prediction value");
  }
  if (samples.kind != TaskKind::kClassification) return;
  const Index c = samples.num_classes;
  for (Index j = 0; j < samples.mask_count(); ++j) {
    for (Index s = 0; s < samples.num_points; ++s) {
      auto group = samples.values.row(j).segment(s * c, c);
      if (group.minCoeff() < 0.0 || group.maxCoeff() > 1.0 ||
          std::abs(group.sum() - 1.0) > kSimplexTolerance) {
        throw Error(ErrorCode::kInvalidData,
                    "probabilities of point " + std::to_string(s) +
                        " in realization " + std::to_string(j) +
                        " are not on the simplex");
      }
    }
  }
}

// S x c matrix of mean predictions over the mask realizations.
inline Eigen::MatrixXd MeanPredictions(const PredictionSamples& samples) {
  Eigen::RowVectorXd mean = samples.values.colwise().mean();
  Eigen::MatrixXd out(samples.num_points, samples.num_classes);
  for (Index s = 0; s < samples.num_points; ++s) {
    for (Index k = 0; k < samples.num_classes; ++k) {
      out(s, k) = mean(samples.column(s, k));
    }
  }
  return out;
}

// Per-point sample variance (divisor J-1) of every output column.
inline Eigen::VectorXd ColumnVariances(const Eigen::MatrixXd& values) {
  const Index rows = values.rows();
  if (rows < 2) {
    throw Error(ErrorCode::kInsufficientSamples,
                "need at least two realizations, got " + std::to_string(rows));
  }
  Eigen::RowVectorXd mean = values.colwise().mean();
  Eigen::MatrixXd centered = values.rowwise() - mean;
  return centered.colwise().squaredNorm().transpose() /
         static_cast<double>(rows - 1);
}

namespace io {

inline std::vector<std::string> SamplesHeader(const PredictionSamples& s) {
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(s.dim()));
  for (Index p = 0; p < s.num_points; ++p) {
    if (s.kind == TaskKind::kRegression) {
      names.push_back("point_" + std::to_string(p));
      continue;
    }
    for (Index k = 0; k < s.num_classes; ++k) {
      names.push_back("point_" + std::to_string(p) + "_class_" +
                      std::to_string(k));
    }
  }
  return names;
}

inline nlohmann::json ManifestJson(const PredictionSamples& s) {
  return {{"kind", ToString(s.kind)},
          {"S", s.num_points},
          {"c", s.num_classes},
          {"J", s.mask_count()},
          {"seed", s.seed}};
}

// Shortest representation that round-trips exactly.
inline std::string FormatDouble(double value) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, end);
}

inline double ParseDouble(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) {
    text.remove_prefix(1);
  }
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' ||
                           text.back() == '\r')) {
    text.remove_suffix(1);
  }
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorCode::kInvalidData,
                "cannot parse number '" + std::string(text) + "'");
  }
  return value;
}

inline std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream stream(line);
  while (std::getline(stream, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

inline void WriteSamplesCsv(const std::string& path,
                            const PredictionSamples& samples) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path + " for writing");
  const auto header = SamplesHeader(samples);
  for (std::size_t i = 0; i < header.size(); ++i) {
    out << (i ? "," : "") << header[i];
  }
  out << '\n';
  for (Index j = 0; j < samples.mask_count(); ++j) {
    for (Index d = 0; d < samples.dim(); ++d) {
      out << (d ? "," : "") << FormatDouble(samples.values(j, d));
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path);
}

inline void WriteManifest(const std::string& path,
                          const PredictionSamples& samples) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path + " for writing");
  out << ManifestJson(samples).dump(2) << '\n';
}

inline nlohmann::json ReadJsonFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidData, path + ": " + e.what());
  }
}

// Reads a samples CSV against its manifest and validates the result.
inline PredictionSamples ReadSamples(const std::string& csv_path,
                                     const std::string& manifest_path) {
  PredictionSamples samples;
  const auto manifest = ReadJsonFile(manifest_path);
  Index expected_rows = 0;
  try {
    samples.kind = ParseTaskKind(manifest.at("kind").get<std::string>());
    samples.num_points = manifest.at("S").get<Index>();
    samples.num_classes = manifest.value("c", Index{1});
    expected_rows = manifest.at("J").get<Index>();
    samples.seed = manifest.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidData, manifest_path + ": " + e.what());
  }

  std::ifstream in(csv_path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + csv_path);
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorCode::kInvalidData, csv_path + ": missing header");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (SplitCsvLine(line) != SamplesHeader(samples)) {
    throw Error(ErrorCode::kInvalidData,
                csv_path + ": header does not match manifest layout");
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto fields = SplitCsvLine(line);
    if (static_cast<Index>(fields.size()) != samples.dim()) {
      throw Error(ErrorCode::kInvalidData,
                  csv_path + ": row " + std::to_string(rows.size() + 1) +
                      " has " + std::to_string(fields.size()) + " fields");
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) row.push_back(ParseDouble(f));
    rows.push_back(std::move(row));
  }
  if (static_cast<Index>(rows.size()) != expected_rows) {
    throw Error(ErrorCode::kInvalidData,
                csv_path + ": manifest declares J=" +
                    std::to_string(expected_rows) + " but file has " +
                    std::to_string(rows.size()) + " rows");
  }
  samples.values.resize(expected_rows, samples.dim());
  for (Index j = 0; j < expected_rows; ++j) {
    for (Index d = 0; d < samples.dim(); ++d) {
      samples.values(j, d) = rows[static_cast<std::size_t>(j)]
                                 [static_cast<std::size_t>(d)];
    }
  }
  Validate(samples);
  return samples;
}

}  // namespace io
}  // namespace deimos
