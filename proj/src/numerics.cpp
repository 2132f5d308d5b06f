// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdio>

#include "iolm/common.hpp"
#include "iolm/matrix.hpp"

namespace iolm {

std::string to_hex(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace {

void check_finite(const std::vector<float>& values) {
  for (float v : values) {
    if (!std::isfinite(v)) throw ContractViolation("Matrix: non-finite entry");
  }
}

}  // namespace

Matrix::Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0f) {
  if (r < 0 || c < 0) throw ContractViolation("Matrix: negative dimension");
}

Matrix::Matrix(int r, int c, std::vector<float> values)
    : rows(r), cols(c), data(std::move(values)) {
  if (r < 0 || c < 0) throw ContractViolation("Matrix: negative dimension");
  if (data.size() != static_cast<size_t>(r) * c)
    throw ContractViolation("Matrix: data length != rows*cols");
  check_finite(data);
}

Matrix Matrix::identity(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m.at(i, i) = 1.0f;
  return m;
}

MatrixD::MatrixD(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {
  if (r < 0 || c < 0) throw ContractViolation("MatrixD: negative dimension");
}

MatrixD MatrixD::identity(int n) {
  MatrixD m(n, n);
  for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

Matrix matmul(const Matrix& a, const Matrix& b, FlopCounter& counter) {
  if (a.cols != b.rows)
    throw ContractViolation("matmul: dimension mismatch (" + std::to_string(a.rows) + "x" +
                            std::to_string(a.cols) + " * " + std::to_string(b.rows) + "x" +
                            std::to_string(b.cols) + ")");
  Matrix c(a.rows, b.cols);
  // i-k-j order: every c[i][j] accumulates a[i][k]*b[k][j] for k ascending,
  // the same per-element sequence as the naive i-j-k loop, but contiguous in
  // j so the inner loop vectorizes without any reassociation.
  for (int i = 0; i < a.rows; ++i) {
    const float* arow = a.row(i);
    float* crow = c.row(i);
    for (int k = 0; k < a.cols; ++k) {
      const float av = arow[k];
      const float* brow = b.row(k);
      for (int j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
    }
  }
  counter.add(static_cast<uint64_t>(a.rows) * a.cols * b.cols);
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols, a.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) t.at(j, i) = a.at(i, j);
  return t;
}

MatrixD cholesky(const MatrixD& a) {
  if (a.rows != a.cols) throw ContractViolation("cholesky: matrix not square");
  const int n = a.rows;
  MatrixD l(n, n);
  for (int j = 0; j < n; ++j) {
    double diag = a.at(j, j);
    for (int k = 0; k < j; ++k) diag -= l.at(j, k) * l.at(j, k);
    if (!(diag > 0.0))
      throw NotPositiveDefinite(j, "cholesky: non-positive pivot at index " + std::to_string(j));
    const double ljj = std::sqrt(diag);
    l.at(j, j) = ljj;
    for (int i = j + 1; i < n; ++i) {
      double s = a.at(i, j);
      for (int k = 0; k < j; ++k) s -= l.at(i, k) * l.at(j, k);
      l.at(i, j) = s / ljj;
    }
  }
  return l;
}

MatrixD cholesky_inverse(const MatrixD& l) {
  if (l.rows != l.cols) throw ContractViolation("cholesky_inverse: matrix not square");
  const int n = l.rows;
  for (int i = 0; i < n; ++i) {
    if (l.at(i, i) == 0.0)
      throw ContractViolation("cholesky_inverse: zero diagonal at index " + std::to_string(i));
  }
  // Solve (L L^T) X = I column by column: forward then back substitution.
  MatrixD inv(n, n);
  std::vector<double> y(n);
  for (int col = 0; col < n; ++col) {
    for (int i = 0; i < n; ++i) {
      double s = (i == col) ? 1.0 : 0.0;
      for (int k = 0; k < i; ++k) s -= l.at(i, k) * y[k];
      y[i] = s / l.at(i, i);
    }
    for (int i = n - 1; i >= 0; --i) {
      double s = y[i];
      for (int k = i + 1; k < n; ++k) s -= l.at(k, i) * inv.at(k, col);
      inv.at(i, col) = s / l.at(i, i);
    }
  }
  return inv;
}

std::vector<float> softmax_row(std::span<const float> x, std::span<const uint8_t> mask) {
  if (!mask.empty() && mask.size() != x.size())
    throw ContractViolation("softmax_row: mask length mismatch");
  const auto unmasked = [&](size_t i) { return mask.empty() || mask[i] != 0; };

  float max_val = 0.0f;
  bool any = false;
  for (size_t i = 0; i < x.size(); ++i) {
    if (!unmasked(i)) continue;
    if (!any || x[i] > max_val) max_val = x[i];
    any = true;
  }
  if (!any) throw ContractViolation("softmax_row: all positions masked");

  std::vector<float> out(x.size(), 0.0f);
  float sum = 0.0f;
  for (size_t i = 0; i < x.size(); ++i) {
    if (!unmasked(i)) continue;
    const float e = std::exp(x[i] - max_val);
    out[i] = e;
    sum += e;
  }
  for (size_t i = 0; i < x.size(); ++i) {
    if (unmasked(i)) out[i] /= sum;
  }
  return out;
}

std::vector<float> layernorm_row(std::span<const float> x, std::span<const float> gain,
                                 std::span<const float> bias, float eps) {
  if (gain.size() != x.size() || bias.size() != x.size())
    throw ContractViolation("layernorm_row: parameter length mismatch");
  if (x.empty()) throw ContractViolation("layernorm_row: empty row");
  float mean = 0.0f;
  for (float v : x) mean += v;
  mean /= static_cast<float>(x.size());
  float var = 0.0f;
  for (float v : x) {
    const float d = v - mean;
    var += d * d;
  }
  var /= static_cast<float>(x.size());
  const float inv_std = 1.0f / std::sqrt(var + eps);
  std::vector<float> out(x.size());
  for (size_t i = 0; i < x.size(); ++i)
    out[i] = (x[i] - mean) * inv_std * gain[i] + bias[i];
  return out;
}

float gelu(float x) {
  const float kSqrt2OverPi = 0.7978845608028654f;
  const float kCubicCoeff = 0.044715f;
  const float inner = kSqrt2OverPi * (x + kCubicCoeff * x * x * x);
  return 0.5f * x * (1.0f + std::tanh(inner));
}

void gelu_inplace(std::span<float> x) {
  for (float& v : x) v = gelu(v);
}

int argmax_row(std::span<const float> x) {
  if (x.empty()) throw ContractViolation("argmax_row: empty row");
  int best = 0;
  for (size_t i = 1; i < x.size(); ++i) {
    if (x[i] > x[best]) best = static_cast<int>(i);
  }
  return best;
}

}  // namespace iolm
