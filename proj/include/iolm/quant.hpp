// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "iolm/matrix.hpp"

namespace iolm {

// Per-output-channel symmetric quantization output. codes are row-major;
// dequantization is code * scale per element.
struct QuantResult {
  int bits = 8;
  std::vector<int8_t> codes;
  std::vector<float> scales;  // one per row

  Matrix dequantize(int rows, int cols) const;
};

// Round-to-nearest with per-row scale max|w| / qmax (qmax = 2^(bits-1) - 1),
// round-half-to-even, all-zero rows fall back to scale 1.0. Total function.
QuantResult quantize_rtn(const Matrix& w, int bits);

// Error-compensated quantization: columns are quantized in ascending index
// order against RTN scales; each column's residual is propagated to the
// not-yet-quantized columns through the upper Cholesky factor of H^-1 where
// H = 2 X^T X + lambda I over calibration inputs X (samples x w.cols).
// `frozen` marks entries that must stay exactly zero (already-sparsified
// weights); their full value counts as propagated error.
// Throws CalibrationIllConditioned when H cannot be factored after damping.
QuantResult quantize_gptq(const Matrix& w, const Matrix& calib_x, int bits, double lambda_rel,
                          const std::vector<uint8_t>* frozen_zero = nullptr);

// || (W - W_hat) X^T ||_F over calibration inputs, the reconstruction error
// both quantizers are judged by.
double reconstruction_error(const Matrix& w, const Matrix& w_hat, const Matrix& calib_x);

enum class SparsePattern { unstructured, two_of_four };
enum class SparsifyMethod { magnitude, compensated };

struct SparsifyResult {
  Matrix values;              // pruned weights (zeros at dropped positions)
  std::vector<uint8_t> mask;  // row-major, 1 = kept
};

// Magnitude keeps the largest |w| (2 per aligned group of 4 for
// two_of_four, globally top (1-ratio) for unstructured); ties keep the
// lowest index. Compensated scores by w^2 / diag(H^-1) and propagates the
// error of dropped entries exactly like quantize_gptq.
// two_of_four requires cols divisible by 4 (PatternMismatch otherwise);
// compensated requires calibration inputs.
SparsifyResult sparsify(const Matrix& w, SparsePattern pattern, double ratio,
                        SparsifyMethod method, const Matrix* calib_x, double lambda_rel);

// True when every aligned group of 4 has at most 2 nonzeros in every row.
bool check_two_of_four(const Matrix& w);

}  // namespace iolm
