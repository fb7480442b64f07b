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


// Candidate scoring by expected improvement (expected total variance
// reduction over the representative sample), greedy batch assembly with
// covariance conditioning after each pick, an exhaustive-search oracle and
// the usual baselines.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "deimos/covariance.hpp"
#include "deimos/error.hpp"

namespace deimos {

enum class Method { kDeimos, kBruteForce, kRandom, kMaxVariance, kMaxEntropy };

inline std::string ToString(Method m) {
  switch (m) {
    case Method::kDeimos: return "deimos";
    case Method::kBruteForce: return "brute_force";
    case Method::kRandom: return "random";
    case Method::kMaxVariance: return "max_variance";
    case Method::kMaxEntropy: return "max_entropy";
  }
  return "unknown";
}

inline Method ParseMethod(const std::string& text) {
  for (Method m : {Method::kDeimos, Method::kBruteForce, Method::kRandom,
                   Method::kMaxVariance, Method::kMaxEntropy}) {
    if (ToString(m) == text) return m;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown method '" + text + "'");
}

struct CandidateSet {
  enum class Provenance { kAllUnlabeled, kSubsampled };

  std::vector<Index> indices;
  Provenance provenance = Provenance::kAllUnlabeled;

  std::size_t size() const { return indices.size(); }

  // Every point in [0, num_points) that is not in `labeled`.
  static CandidateSet Unlabeled(Index num_points,
                                const std::vector<Index>& labeled = {}) {
    std::set<Index> skip(labeled.begin(), labeled.end());
    CandidateSet set;
    for (Index i = 0; i < num_points; ++i) {
      if (!skip.count(i)) set.indices.push_back(i);
    }
    return set;
  }
};

struct AcquisitionResult {
  Method method = Method::kDeimos;
  std::vector<Index> selected;
  std::vector<double> ei_per_step;
  std::vector<double> trace_trajectory;  // b + 1 entries when recorded
  std::uint64_t seed = 0;

  double total_reduction() const {
    return std::accumulate(ei_per_step.begin(), ei_per_step.end(), 0.0);
  }
};

// Checks distinctness, range and that no candidate is already conditioned on.
inline void ValidateCandidates(const CandidateSet& candidates,
                               Index num_points,
                               const std::set<Index>& conditioned = {}) {
  std::set<Index> seen;
  for (Index i : candidates.indices) {
    if (i < 0 || i >= num_points) {
      throw Error(ErrorCode::kInvalidArgument,
                  "candidate " + std::to_string(i) + " out of range");
    }
    if (!seen.insert(i).second) {
      throw Error(ErrorCode::kInvalidArgument,
                  "duplicate candidate " + std::to_string(i));
    }
    if (conditioned.count(i)) {
      throw Error(ErrorCode::kAlreadyConditioned,
                  "candidate " + std::to_string(i) +
                      " is already conditioned on");
    }
  }
}

inline void CheckBatchSize(const CandidateSet& candidates, Index b) {
  if (b < 0 || static_cast<std::size_t>(b) > candidates.size()) {
    throw Error(ErrorCode::kBatchTooLarge,
                "batch size " + std::to_string(b) + " exceeds " +
                    std::to_string(candidates.size()) + " candidates");
  }
}

// Regression EI: sum_j V_jc^2 / V_cc.
inline double EiRegression(const CovarianceModel& cov, Index candidate) {
  detail::CheckPoint(cov, candidate);
  if (cov.num_classes != 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "regression EI needs one output per point");
  }
  if (cov.is_conditioned(candidate)) {
    throw Error(ErrorCode::kAlreadyConditioned,
                "candidate " + std::to_string(candidate) +
                    " is already conditioned on");
  }
  const double pivot = cov.matrix(candidate, candidate) + cov.tau_s_inv;
  if (!(pivot > kSingularRelTol * std::max(cov.trace(), 0.0))) {
    throw Error(ErrorCode::kSingularBlock,
                "variance of candidate " + std::to_string(candidate) +
                    " is numerically zero");
  }
  return cov.matrix.col(candidate).squaredNorm() / pivot;
}

// Classification EI: tr(V_c (V_cc + tau_s_inv I)^-1 V_c^T) over the
// candidate's c output columns.
inline double EiClassification(const CovarianceModel& cov, Index candidate) {
  detail::CheckPoint(cov, candidate);
  if (cov.is_conditioned(candidate)) {
    throw Error(ErrorCode::kAlreadyConditioned,
                "candidate " + std::to_string(candidate) +
                    " is already conditioned on");
  }
  const Index c = cov.num_classes;
  std::vector<Index> cols(static_cast<std::size_t>(c));
  std::iota(cols.begin(), cols.end(), candidate * c);
  const auto ldlt = detail::FactorBlock(cov, cols);
  Eigen::MatrixXd cross_t = cov.point_columns(candidate).transpose();
  Eigen::MatrixXd solved = ldlt.solve(cross_t);
  return cross_t.cwiseProduct(solved).sum();
}

inline double ExpectedImprovement(const CovarianceModel& cov, Index candidate) {
  return cov.num_classes == 1 ? EiRegression(cov, candidate)
                              : EiClassification(cov, candidate);
}

// Scores against a frozen covariance; every entry is independent.
inline std::vector<double> ScoreCandidates(const CovarianceModel& cov,
                                           const CandidateSet& candidates) {
  std::vector<double> scores(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    scores[i] = ExpectedImprovement(cov, candidates.indices[i]);
  }
  return scores;
}

namespace detail {

// Position of the maximum score; exact ties go to the lowest point index.
inline std::size_t ArgmaxLowIndex(const std::vector<double>& scores,
                                  const std::vector<Index>& indices) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best] ||
        (scores[i] == scores[best] && indices[i] < indices[best])) {
      best = i;
    }
  }
  return best;
}

// Top-b by score, ties broken by lower index.
inline std::vector<Index> TopByScore(const std::vector<double>& scores,
                                     const std::vector<Index>& indices,
                                     Index b) {
  std::vector<std::size_t> order(indices.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    if (scores[x] != scores[y]) return scores[x] > scores[y];
    return indices[x] < indices[y];
  });
  std::vector<Index> out;
  for (Index k = 0; k < b; ++k) {
    out.push_back(indices[order[static_cast<std::size_t>(k)]]);
  }
  return out;
}

}  // namespace detail

// Fills ei_per_step / trace_trajectory with the realized trace drops of
// conditioning on `result.selected` in order. Used to audit baselines.
inline void AttachTrajectory(AcquisitionResult& result,
                             const CovarianceModel& cov) {
  result.ei_per_step.clear();
  result.trace_trajectory = {cov.trace()};
  CovarianceModel working = cov;
  for (Index point : result.selected) {
    working = ConditionOn(std::move(working), point);
    result.trace_trajectory.push_back(working.trace());
    result.ei_per_step.push_back(
        result.trace_trajectory[result.trace_trajectory.size() - 2] -
        result.trace_trajectory.back());
  }
}

// Greedy batch: repeatedly take the max-EI candidate and condition on it.
inline AcquisitionResult GreedyBatch(const CovarianceModel& cov,
                                     const CandidateSet& candidates, Index b) {
  ValidateCandidates(candidates, cov.num_points, cov.conditioned_indices);
  CheckBatchSize(candidates, b);

  AcquisitionResult result;
  result.method = Method::kDeimos;
  result.trace_trajectory.push_back(cov.trace());
  std::vector<Index> remaining = candidates.indices;
  CovarianceModel working = cov;
  for (Index step = 0; step < b; ++step) {
    std::vector<double> scores(remaining.size());
    for (std::size_t i = 0; i < remaining.size(); ++i) {
      scores[i] = ExpectedImprovement(working, remaining[i]);
    }
    const std::size_t best = detail::ArgmaxLowIndex(scores, remaining);
    const Index chosen = remaining[best];
    working = ConditionOn(std::move(working), chosen);
    result.selected.push_back(chosen);
    result.ei_per_step.push_back(scores[best]);
    result.trace_trajectory.push_back(working.trace());
    remaining.erase(remaining.begin() + static_cast<long>(best));
  }
  return result;
}

inline constexpr double kDefaultSubsetCap = 1e7;

// Number of size-k subsets of n items, saturating at +inf.
inline double BinomialCount(Index n, Index k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double count = 1.0;
  for (Index i = 1; i <= k; ++i) {
    count = count * static_cast<double>(n - k + i) / static_cast<double>(i);
  }
  return std::round(count);
}

// Exhaustive oracle. Each subset B is scored by the trace drop of joint
// conditioning, tr((V_BB + tau_s_inv I)^-1 (V^2)_BB), using only the
// candidate columns of V^2. Ties keep the lexicographically first subset.
inline AcquisitionResult BruteForceBatch(const CovarianceModel& cov,
                                         const CandidateSet& candidates,
                                         Index b,
                                         double subset_cap = kDefaultSubsetCap) {
  ValidateCandidates(candidates, cov.num_points, cov.conditioned_indices);
  CheckBatchSize(candidates, b);
  const Index n = static_cast<Index>(candidates.size());
  const double subsets = BinomialCount(n, b);
  if (subsets > subset_cap) {
    throw Error(ErrorCode::kCombinatorialBlowup,
                std::to_string(subsets) + " subsets exceed the cap of " +
                    std::to_string(subset_cap));
  }

  AcquisitionResult result;
  result.method = Method::kBruteForce;
  const double trace = cov.trace();
  if (b == 0) {
    result.trace_trajectory = {trace};
    return result;
  }

  std::vector<Index> sorted = candidates.indices;
  std::sort(sorted.begin(), sorted.end());
  const Index c = cov.num_classes;
  const auto cand_cols = detail::PointColumns(cov, sorted);
  Eigen::MatrixXd cross = cov.matrix(Eigen::all, cand_cols);
  Eigen::MatrixXd gram = cross.transpose() * cross;           // (V^2)_CC
  Eigen::MatrixXd inner = cov.matrix(cand_cols, cand_cols);   // V_CC

  const Index width = b * c;
  const double threshold = kSingularRelTol * std::max(trace, 0.0);
  Eigen::MatrixXd block(width, width);
  Eigen::MatrixXd rhs(width, width);
  Eigen::LLT<Eigen::MatrixXd> llt(width);
  std::vector<Index> pos(static_cast<std::size_t>(b));
  std::iota(pos.begin(), pos.end(), Index{0});
  std::vector<Index> local(static_cast<std::size_t>(width));

  double best = -std::numeric_limits<double>::infinity();
  std::vector<Index> best_pos;
  while (true) {
    for (Index k = 0; k < b; ++k) {
      for (Index m = 0; m < c; ++m) {
        local[static_cast<std::size_t>(k * c + m)] =
            pos[static_cast<std::size_t>(k)] * c + m;
      }
    }
    for (Index x = 0; x < width; ++x) {
      const Index lx = local[static_cast<std::size_t>(x)];
      for (Index y = 0; y < width; ++y) {
        const Index ly = local[static_cast<std::size_t>(y)];
        block(x, y) = inner(lx, ly);
        rhs(x, y) = gram(lx, ly);
      }
      block(x, x) += cov.tau_s_inv;
    }
    llt.compute(block);
    if (llt.info() != Eigen::Success ||
        !(llt.matrixLLT().diagonal().array().square().minCoeff() > threshold)) {
      throw Error(ErrorCode::kSingularBlock,
                  "joint covariance block of a candidate subset is singular");
    }
    llt.solveInPlace(rhs);
    const double reduction = rhs.trace();
    if (reduction > best) {
      best = reduction;
      best_pos = pos;
    }

    // Next combination in lexicographic order.
    Index k = b - 1;
    while (k >= 0 && pos[static_cast<std::size_t>(k)] == n - b + k) --k;
    if (k < 0) break;
    ++pos[static_cast<std::size_t>(k)];
    for (Index j = k + 1; j < b; ++j) {
      pos[static_cast<std::size_t>(j)] = pos[static_cast<std::size_t>(j - 1)] + 1;
    }
  }

  for (Index p : best_pos) result.selected.push_back(sorted[static_cast<std::size_t>(p)]);
  result.ei_per_step.assign(static_cast<std::size_t>(b), 0.0);
  result.ei_per_step[0] = best;
  result.trace_trajectory.push_back(trace);
  for (Index k = 0; k < b; ++k) result.trace_trajectory.push_back(trace - best);
  return result;
}

inline AcquisitionResult BaselineRandom(const CandidateSet& candidates, Index b,
                                        std::uint64_t seed) {
  CheckBatchSize(candidates, b);
  std::mt19937_64 rng(seed);
  std::vector<Index> pool = candidates.indices;
  std::shuffle(pool.begin(), pool.end(), rng);
  AcquisitionResult result;
  result.method = Method::kRandom;
  result.seed = seed;
  result.selected.assign(pool.begin(), pool.begin() + static_cast<long>(b));
  return result;
}

// Top-b by own predictive variance (trace of the c x c block).
inline AcquisitionResult BaselineMaxVariance(const CovarianceModel& cov,
                                             const CandidateSet& candidates,
                                             Index b) {
  ValidateCandidates(candidates, cov.num_points, cov.conditioned_indices);
  CheckBatchSize(candidates, b);
  std::vector<double> variance;
  for (Index i : candidates.indices) variance.push_back(cov.point_block(i).trace());
  AcquisitionResult result;
  result.method = Method::kMaxVariance;
  result.selected = detail::TopByScore(variance, candidates.indices, b);
  return result;
}

// Shannon entropy in nats, with 0 log 0 = 0.
inline double Entropy(const Eigen::RowVectorXd& probs) {
  double h = 0.0;
  for (Index k = 0; k < probs.size(); ++k) {
    if (probs(k) > 0.0) h -= probs(k) * std::log(probs(k));
  }
  return h;
}

// Top-b by entropy of the mean class probabilities (S x c).
inline AcquisitionResult BaselineMaxEntropy(const Eigen::MatrixXd& mean_probs,
                                            const CandidateSet& candidates,
                                            Index b) {
  ValidateCandidates(candidates, mean_probs.rows());
  CheckBatchSize(candidates, b);
  std::vector<double> entropy;
  for (Index i : candidates.indices) {
    const Eigen::RowVectorXd row = mean_probs.row(i);
    if (row.minCoeff() < 0.0 || std::abs(row.sum() - 1.0) > kSimplexTolerance) {
      throw Error(ErrorCode::kInvalidData,
                  "mean probabilities of point " + std::to_string(i) +
                      " are not on the simplex");
    }
    entropy.push_back(Entropy(row));
  }
  AcquisitionResult result;
  result.method = Method::kMaxEntropy;
  result.selected = detail::TopByScore(entropy, candidates.indices, b);
  return result;
}

inline nlohmann::json ToJson(const AcquisitionResult& r) {
  return {{"method", ToString(r.method)},
          {"selected", r.selected},
          {"ei_per_step", r.ei_per_step},
          {"trace_trajectory", r.trace_trajectory},
          {"seed", r.seed}};
}

inline AcquisitionResult AcquisitionFromJson(const nlohmann::json& j) {
  AcquisitionResult r;
  try {
    r.method = ParseMethod(j.at("method").get<std::string>());
    r.selected = j.at("selected").get<std::vector<Index>>();
    r.ei_per_step = j.at("ei_per_step").get<std::vector<double>>();
    r.trace_trajectory = j.at("trace_trajectory").get<std::vector<double>>();
    r.seed = j.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidData, e.what());
  }
  return r;
}

}  // namespace deimos
