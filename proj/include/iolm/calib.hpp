// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "iolm/matrix.hpp"
#include "iolm/rng.hpp"
#include "iolm/runtime.hpp"

namespace iolm {

// Captured layer inputs from forward passes over sampled prompts. Matrices
// are samples x features with one row per non-pad token position,
// concatenated across prompts in order.
struct CalibrationSet {
  std::vector<std::string> prompts;
  std::map<std::string, Matrix> inputs;  // capture point -> samples x features
  int sample_count = 0;                  // prompts used
  uint64_t fingerprint = 0;              // prompts + model identity

  // Input matrix feeding a weight tensor (via capture_point_for).
  const Matrix& input_for(const std::string& tensor_name) const;
};

// Runs instrumented forwards over (up to) k of the given prompts and
// collects every linear layer's inputs. If k < prompts.size() a seeded
// reservoir subsample is taken, preserving original order; the usual caller
// has already sampled rows and passes k == prompts.size().
// Throws EmptyCalibration on an empty prompt list.
CalibrationSet capture_calibration(const ModelRuntime& runtime,
                                   std::span<const std::string> prompts, int k, Rng& rng);

// Damped Gram matrix of calibration inputs: H = 2 X^T X + lambda I with
// lambda = lambda_rel * mean(diag(2 X^T X)), in double precision.
MatrixD build_hessian(const Matrix& x, double lambda_rel);

}  // namespace iolm
