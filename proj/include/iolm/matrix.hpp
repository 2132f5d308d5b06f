// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <vector>

namespace iolm {

// Cumulative multiply-add counter. Only matmul-shaped work is counted;
// elementwise ops (layernorm, gelu, softmax, residual adds) are not.
// Safe to increment from concurrent workers; the final total is exact.
class FlopCounter {
 public:
  void add(uint64_t madds) { madds_.fetch_add(madds, std::memory_order_relaxed); }
  uint64_t total() const { return madds_.load(std::memory_order_relaxed); }
  void reset() { madds_.store(0, std::memory_order_relaxed); }

 private:
  std::atomic<uint64_t> madds_{0};
};

// Dense row-major float32 matrix, the carrier for all weights and
// activations. Constructors taking values reject NaN/Inf.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<float> data;  // rows * cols, row-major

  Matrix() = default;
  Matrix(int rows, int cols);                            // zero-filled
  Matrix(int rows, int cols, std::vector<float> values); // validates finiteness

  float& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  float at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  float* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
  const float* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
  std::span<float> row_span(int r) { return {row(r), static_cast<size_t>(cols)}; }
  std::span<const float> row_span(int r) const { return {row(r), static_cast<size_t>(cols)}; }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  static Matrix identity(int n);
};

// Double-precision twin used by the inverse-Hessian machinery (Cholesky
// factorizations need more headroom than 32-bit storage provides).
struct MatrixD {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  MatrixD() = default;
  MatrixD(int rows, int cols);

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

  static MatrixD identity(int n);
};

// C = A * B in IEEE-754 single precision with a fixed summation order: each
// output element accumulates products in ascending inner index. The result
// is bit-identical regardless of how callers batch rows, which is what makes
// the engine's batch-transparency contracts exact equalities.
// Increments counter by a.rows * a.cols * b.cols multiply-adds.
Matrix matmul(const Matrix& a, const Matrix& b, FlopCounter& counter);

Matrix transpose(const Matrix& a);

// Lower-triangular L with L * L^T == a. Throws NotPositiveDefinite naming
// the failing pivot index.
MatrixD cholesky(const MatrixD& a);

// (L * L^T)^-1 from a lower-triangular factor with positive diagonal.
MatrixD cholesky_inverse(const MatrixD& l);

// Masked, max-subtracted softmax. mask may be empty (nothing masked);
// masked positions are exactly zero in the result. Throws on all-masked.
std::vector<float> softmax_row(std::span<const float> x, std::span<const uint8_t> mask);

// Mean/variance over features, epsilon 1e-5, affine gain/bias.
std::vector<float> layernorm_row(std::span<const float> x, std::span<const float> gain,
                                 std::span<const float> bias, float eps = 1e-5f);

// tanh-approximation GELU: 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3))).
float gelu(float x);
void gelu_inplace(std::span<float> x);

// Index of the maximum element; ties resolve to the lowest index.
int argmax_row(std::span<const float> x);

}  // namespace iolm
