// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#include "iolm/fastmath.hpp"

#include <cstring>

#include "iolm/common.hpp"

namespace iolm::fastmath {

void gemm(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols)
    throw ContractViolation("fastmath::gemm: shape mismatch");
  std::memset(c.data.data(), 0, c.data.size() * sizeof(float));
  for (int i = 0; i < a.rows; ++i) {
    const float* arow = a.row(i);
    float* crow = c.row(i);
    for (int k = 0; k < a.cols; ++k) {
      const float av = arow[k];
      const float* brow = b.row(k);
      for (int j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_bt(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols != b.cols || c.rows != a.rows || c.cols != b.rows)
    throw ContractViolation("fastmath::gemm_bt: shape mismatch");
  // Materializing B^T turns the inner loop into the stride-1 ikj form,
  // which vectorizes far better than per-output dot products.
  Matrix bt(b.cols, b.rows);
  for (int i = 0; i < b.rows; ++i)
    for (int j = 0; j < b.cols; ++j) bt.at(j, i) = b.at(i, j);
  gemm(a, bt, c);
}

void gemm_at(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols)
    throw ContractViolation("fastmath::gemm_at: shape mismatch");
  std::memset(c.data.data(), 0, c.data.size() * sizeof(float));
  for (int k = 0; k < a.rows; ++k) {
    const float* arow = a.row(k);
    const float* brow = b.row(k);
    for (int i = 0; i < a.cols; ++i) {
      const float av = arow[i];
      float* crow = c.row(i);
      for (int j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
    }
  }
}

void syrk_accumulate(const Matrix& x, double scale, MatrixD& h) {
  if (h.rows != x.rows || h.cols != x.rows)
    throw ContractViolation("fastmath::syrk_accumulate: shape mismatch");
  const int n = x.rows;
  const int m = x.cols;
  for (int i = 0; i < n; ++i) {
    const float* xi = x.row(i);
    for (int j = i; j < n; ++j) {
      const float* xj = x.row(j);
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
      int k = 0;
      for (; k + 4 <= m; k += 4) {
        s0 += static_cast<double>(xi[k]) * xj[k];
        s1 += static_cast<double>(xi[k + 1]) * xj[k + 1];
        s2 += static_cast<double>(xi[k + 2]) * xj[k + 2];
        s3 += static_cast<double>(xi[k + 3]) * xj[k + 3];
      }
      double rest = 0.0;
      for (; k < m; ++k) rest += static_cast<double>(xi[k]) * xj[k];
      const double v = scale * (((s0 + s1) + (s2 + s3)) + rest);
      h.at(i, j) += v;
      if (j != i) h.at(j, i) += v;
    }
  }
}

void gram_accumulate(const Matrix& x, double scale, MatrixD& h) {
  if (h.rows != x.cols || h.cols != x.cols)
    throw ContractViolation("fastmath::gram_accumulate: shape mismatch");
  const int f = x.cols;
  // Rank-1 update per sample row keeps accesses contiguous.
  MatrixD acc(f, f);
  for (int s = 0; s < x.rows; ++s) {
    const float* row = x.row(s);
    for (int i = 0; i < f; ++i) {
      const double xi = row[i];
      if (xi == 0.0) continue;
      double* hrow = acc.row(i);
      for (int j = i; j < f; ++j) hrow[j] += xi * row[j];
    }
  }
  for (int i = 0; i < f; ++i)
    for (int j = i; j < f; ++j) {
      const double v = scale * acc.at(i, j);
      h.at(i, j) += v;
      if (j != i) h.at(j, i) += v;
    }
}

double dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ContractViolation("fastmath::dot: length mismatch");
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  size_t k = 0;
  for (; k + 4 <= a.size(); k += 4) {
    s0 += static_cast<double>(a[k]) * b[k];
    s1 += static_cast<double>(a[k + 1]) * b[k + 1];
    s2 += static_cast<double>(a[k + 2]) * b[k + 2];
    s3 += static_cast<double>(a[k + 3]) * b[k + 3];
  }
  double rest = 0.0;
  for (; k < a.size(); ++k) rest += static_cast<double>(a[k]) * b[k];
  return ((s0 + s1) + (s2 + s3)) + rest;
}

}  // namespace iolm::fastmath
