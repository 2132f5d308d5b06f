// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "iolm/matrix.hpp"

namespace iolm::fastmath {

// Throughput-oriented kernels for training and calibration statistics.
// These use a fixed but re-associated accumulation order (and allow FMA
// contraction), so results are deterministic for a given binary, not
// bit-portable across implementations. Nothing behind the engine's
// bit-exactness contracts may call them; the model runtime uses
// iolm::matmul instead.

// C = A * B (f32), C must be rows_a x cols_b, overwritten.
void gemm(const Matrix& a, const Matrix& b, Matrix& c);

// C = A * B^T (f32).
void gemm_bt(const Matrix& a, const Matrix& b, Matrix& c);

// C = A^T * B (f32).
void gemm_at(const Matrix& a, const Matrix& b, Matrix& c);

// H += scale * X * X^T where X is features x samples (f32 in, f64 accum).
void syrk_accumulate(const Matrix& x, double scale, MatrixD& h);

// H += scale * X^T * X where X is samples x features (f32 in, f64 accum).
void gram_accumulate(const Matrix& x, double scale, MatrixD& h);

double dot(std::span<const float> a, std::span<const float> b);

}  // namespace iolm::fastmath
