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

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace deimos {

enum class ErrorCode {
  kInsufficientSamples,
  kInvalidData,
  kInvalidArgument,
  kShapeMismatch,
  kSingularBlock,
  kAlreadyConditioned,
  kCorruptedCovariance,
  kBatchTooLarge,
  kCombinatorialBlowup,
  kTrainingDiverged,
  kUnattainableTarget,
  kIo,
};

inline std::string_view ToString(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInsufficientSamples: return "insufficient-samples";
    case ErrorCode::kInvalidData: return "invalid-data";
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kShapeMismatch: return "shape-mismatch";
    case ErrorCode::kSingularBlock: return "singular-block";
    case ErrorCode::kAlreadyConditioned: return "already-conditioned";
    case ErrorCode::kCorruptedCovariance: return "corrupted-covariance";
    case ErrorCode::kBatchTooLarge: return "batch-too-large";
    case ErrorCode::kCombinatorialBlowup: return "combinatorial-blowup";
    case ErrorCode::kTrainingDiverged: return "training-diverged";
    case ErrorCode::kUnattainableTarget: return "unattainable-target";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

// Numerical failures (as opposed to bad inputs) map to a distinct CLI exit
// status.
inline bool IsNumerical(ErrorCode code) {
  return code == ErrorCode::kSingularBlock ||
         code == ErrorCode::kCorruptedCovariance ||
         code == ErrorCode::kTrainingDiverged;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ToString(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace deimos
