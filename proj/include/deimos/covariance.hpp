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


// Joint predictive covariance over the representative sample and its update
// by Gaussian conditioning (Schur complement).

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "deimos/error.hpp"
#include "deimos/samples.hpp"

namespace deimos {

// Dense symmetric D x D predictive covariance, D = S * c.
struct CovarianceModel {
  Eigen::MatrixXd matrix;
  double tau_inv = 0.0;    // regression precision inverse, already on the diagonal
  double tau_s_inv = 0.0;  // classification ridge, applied per candidate block
  Index num_points = 0;
  Index num_classes = 1;
  std::set<Index> conditioned_indices;

  Index dim() const { return matrix.rows(); }
  double trace() const { return matrix.trace(); }
  bool is_conditioned(Index point) const {
    return conditioned_indices.count(point) != 0;
  }

  // Covariance of one point's outputs with everything (D x c).
  auto point_columns(Index point) const {
    return matrix.middleCols(point * num_classes, num_classes);
  }
  auto point_block(Index point) const {
    return matrix.block(point * num_classes, point * num_classes, num_classes,
                        num_classes);
  }
};

// Relative threshold (against the current trace) below which a candidate's
// pivot is treated as singular.
inline constexpr double kSingularRelTol = 1e-12;

// Unbiased (divisor J-1) covariance of the columns of `values`.
// Rows are shifted by the first row before centering, so identical rows give
// an exactly zero matrix and identical columns give bit-identical entries.
inline Eigen::MatrixXd SampleCovariance(const Eigen::MatrixXd& values) {
  const Index rows = values.rows();
  if (rows < 2) {
    throw Error(ErrorCode::kInsufficientSamples,
                "need at least two mask realizations, got " +
                    std::to_string(rows));
  }
  Eigen::MatrixXd shifted = values.rowwise() - values.row(0);
  Eigen::RowVectorXd mean = shifted.colwise().mean();
  shifted.rowwise() -= mean;
  Eigen::MatrixXd cov = shifted.transpose() * shifted;
  cov /= static_cast<double>(rows - 1);
  Eigen::MatrixXd sym = 0.5 * (cov + cov.transpose());
  return sym;
}

inline CovarianceModel EstimateRegressionCovariance(
    const PredictionSamples& samples, double tau_inv) {
  if (samples.kind != TaskKind::kRegression) {
    throw Error(ErrorCode::kInvalidArgument,
                "regression estimator given classification samples");
  }
  if (!(tau_inv >= 0.0) || !std::isfinite(tau_inv)) {
    throw Error(ErrorCode::kInvalidArgument, "tau_inv must be finite and >= 0");
  }
  Validate(samples);
  CovarianceModel cov;
  cov.matrix = SampleCovariance(samples.values);
  cov.matrix.diagonal().array() += tau_inv;
  cov.tau_inv = tau_inv;
  cov.num_points = samples.num_points;
  cov.num_classes = 1;
  return cov;
}

// The ridge tau_s_inv is stored, not added: it only enters at inversion time.
inline CovarianceModel EstimateClassificationCovariance(
    const PredictionSamples& samples, double tau_s_inv) {
  if (samples.kind != TaskKind::kClassification) {
    throw Error(ErrorCode::kInvalidArgument,
                "classification estimator given regression samples");
  }
  if (!(tau_s_inv >= 0.0) || !std::isfinite(tau_s_inv)) {
    throw Error(ErrorCode::kInvalidArgument,
                "tau_s_inv must be finite and >= 0");
  }
  Validate(samples);
  CovarianceModel cov;
  cov.matrix = SampleCovariance(samples.values);
  cov.tau_s_inv = tau_s_inv;
  cov.num_points = samples.num_points;
  cov.num_classes = samples.num_classes;
  return cov;
}

inline CovarianceModel EstimateCovariance(const PredictionSamples& samples,
                                          double tau_inv, double tau_s_inv) {
  return samples.kind == TaskKind::kRegression
             ? EstimateRegressionCovariance(samples, tau_inv)
             : EstimateClassificationCovariance(samples, tau_s_inv);
}

namespace detail {

inline void CheckPoint(const CovarianceModel& cov, Index point) {
  if (point < 0 || point >= cov.num_points) {
    throw Error(ErrorCode::kInvalidArgument,
                "point index " + std::to_string(point) + " out of range [0, " +
                    std::to_string(cov.num_points) + ")");
  }
}

// LDLT of (V_block + tau_s_inv * I) for the given output columns, with the
// singularity rule applied to its pivots.
inline Eigen::LDLT<Eigen::MatrixXd> FactorBlock(const CovarianceModel& cov,
                                                std::span<const Index> columns) {
  const Index n = static_cast<Index>(columns.size());
  Eigen::MatrixXd block(n, n);
  for (Index a = 0; a < n; ++a) {
    for (Index b = 0; b < n; ++b) {
      block(a, b) = cov.matrix(columns[static_cast<std::size_t>(a)],
                               columns[static_cast<std::size_t>(b)]);
    }
  }
  block.diagonal().array() += cov.tau_s_inv;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(block);
  const double threshold = kSingularRelTol * std::max(cov.trace(), 0.0);
  if (ldlt.info() != Eigen::Success || n == 0 ||
      !(ldlt.vectorD().minCoeff() > threshold)) {
    throw Error(ErrorCode::kSingularBlock,
                "candidate covariance block is not invertible");
  }
  return ldlt;
}

inline std::vector<Index> PointColumns(const CovarianceModel& cov,
                                       std::span<const Index> points) {
  std::vector<Index> cols;
  cols.reserve(points.size() * static_cast<std::size_t>(cov.num_classes));
  for (Index p : points) {
    for (Index k = 0; k < cov.num_classes; ++k) {
      cols.push_back(p * cov.num_classes + k);
    }
  }
  return cols;
}

inline void Symmetrize(Eigen::MatrixXd& m) {
  Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  m = std::move(sym);
}

}  // namespace detail

// Conditions on observing a set of points at once:
//   V - V_B (V_BB + tau_s_inv I)^-1 V_B^T
// where B collects every output column of the given points.
inline CovarianceModel ConditionOnPoints(CovarianceModel cov,
                                         std::span<const Index> points) {
  for (std::size_t i = 0; i < points.size(); ++i) {
    detail::CheckPoint(cov, points[i]);
    if (cov.is_conditioned(points[i]) ||
        std::find(points.begin(), points.begin() + static_cast<long>(i),
                  points[i]) != points.begin() + static_cast<long>(i)) {
      throw Error(ErrorCode::kAlreadyConditioned,
                  "point " + std::to_string(points[i]) +
                      " is already conditioned on");
    }
  }
  if (points.empty()) return cov;
  const auto cols = detail::PointColumns(cov, points);
  const auto ldlt = detail::FactorBlock(cov, cols);
  Eigen::MatrixXd cross = cov.matrix(Eigen::all, cols);
  Eigen::MatrixXd solved = ldlt.solve(cross.transpose());
  cov.matrix.noalias() -= cross * solved;
  detail::Symmetrize(cov.matrix);
  // Without smoothing the observed outputs are known exactly.
  if (cov.tau_s_inv == 0.0) {
    cov.matrix(Eigen::all, cols).setZero();
    cov.matrix(cols, Eigen::all).setZero();
  }
  cov.conditioned_indices.insert(points.begin(), points.end());
  return cov;
}

inline CovarianceModel ConditionOn(CovarianceModel cov, Index point) {
  const Index points[] = {point};
  return ConditionOnPoints(std::move(cov), points);
}

inline constexpr double kDiagonalClampTolerance = 1e-10;
inline constexpr double kCorruptionRelTol = 1e-6;

// Re-symmetrizes and clamps tiny negative diagonal entries to zero.
inline CovarianceModel PsdGuard(CovarianceModel cov) {
  detail::Symmetrize(cov.matrix);
  const double trace = std::max(cov.trace(), 0.0);
  for (Index i = 0; i < cov.dim(); ++i) {
    double& d = cov.matrix(i, i);
    if (d < 0.0) {
      if (d < -kCorruptionRelTol * trace && d < -kDiagonalClampTolerance) {
        throw Error(ErrorCode::kCorruptedCovariance,
                    "diagonal entry " + std::to_string(i) + " is " +
                        std::to_string(d));
      }
      d = 0.0;
    }
  }
  return cov;
}

}  // namespace deimos
