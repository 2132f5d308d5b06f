// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#include "iolm/quant.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "iolm/calib.hpp"
#include "iolm/common.hpp"
#include "iolm/fastmath.hpp"

namespace iolm {

namespace {

int qmax_for(int bits) {
  if (bits != 4 && bits != 8) throw ContractViolation("quantize: bits must be 4 or 8");
  return (1 << (bits - 1)) - 1;
}

std::vector<float> rtn_scales(const Matrix& w, int qmax) {
  std::vector<float> scales(w.rows);
  for (int r = 0; r < w.rows; ++r) {
    float amax = 0.0f;
    for (int c = 0; c < w.cols; ++c) amax = std::max(amax, std::fabs(w.at(r, c)));
    scales[r] = amax == 0.0f ? 1.0f : amax / static_cast<float>(qmax);
  }
  return scales;
}

// Round-half-to-even on the default FP environment.
int8_t quantize_one(double value, double scale, int qmax) {
  const double q = std::nearbyint(value / scale);
  const double clamped = std::min(static_cast<double>(qmax), std::max(-static_cast<double>(qmax), q));
  return static_cast<int8_t>(clamped);
}

// Upper Cholesky factor C with H^-1 = C^T C, plus diag(H^-1); the machinery
// shared by GPTQ updates and compensated sparsification.
struct InverseFactor {
  MatrixD upper;
  std::vector<double> inv_diag;
};

InverseFactor inverse_factor(const Matrix& calib_x, int cols, double lambda_rel) {
  if (calib_x.cols != cols)
    throw ContractViolation("quantize: calibration width != weight columns");
  try {
    const MatrixD h = build_hessian(calib_x, lambda_rel);
    const MatrixD hinv = cholesky_inverse(cholesky(h));
    const MatrixD l = cholesky(hinv);
    InverseFactor f;
    f.upper = MatrixD(cols, cols);
    for (int i = 0; i < cols; ++i)
      for (int j = 0; j <= i; ++j) f.upper.at(j, i) = l.at(i, j);
    f.inv_diag.resize(cols);
    for (int i = 0; i < cols; ++i) f.inv_diag[i] = hinv.at(i, i);
    return f;
  } catch (const NotPositiveDefinite& e) {
    throw CalibrationIllConditioned(std::string("calibration Hessian not factorable: ") +
                                    e.what());
  }
}

}  // namespace

Matrix QuantResult::dequantize(int rows, int cols) const {
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const float s = scales[r];
    for (int c = 0; c < cols; ++c)
      m.at(r, c) = static_cast<float>(codes[static_cast<size_t>(r) * cols + c]) * s;
  }
  return m;
}

QuantResult quantize_rtn(const Matrix& w, int bits) {
  const int qmax = qmax_for(bits);
  QuantResult out;
  out.bits = bits;
  out.scales = rtn_scales(w, qmax);
  out.codes.resize(w.data.size());
  for (int r = 0; r < w.rows; ++r) {
    const double s = out.scales[r];
    for (int c = 0; c < w.cols; ++c)
      out.codes[static_cast<size_t>(r) * w.cols + c] =
          quantize_one(w.at(r, c), s, qmax);
  }
  return out;
}

QuantResult quantize_gptq(const Matrix& w, const Matrix& calib_x, int bits, double lambda_rel,
                          const std::vector<uint8_t>* frozen_zero) {
  const int qmax = qmax_for(bits);
  if (frozen_zero && frozen_zero->size() != w.data.size())
    throw ContractViolation("quantize_gptq: frozen mask size mismatch");

  QuantResult out;
  out.bits = bits;
  out.scales = rtn_scales(w, qmax);  // fixed before any update
  out.codes.assign(w.data.size(), 0);

  const InverseFactor f = inverse_factor(calib_x, w.cols, lambda_rel);

  MatrixD wd(w.rows, w.cols);
  for (size_t i = 0; i < w.data.size(); ++i) wd.data[i] = w.data[i];

  std::vector<double> err(w.rows);
  for (int j = 0; j < w.cols; ++j) {
    const double cjj = f.upper.at(j, j);
    for (int r = 0; r < w.rows; ++r) {
      const size_t idx = static_cast<size_t>(r) * w.cols + j;
      const double value = wd.at(r, j);
      double dequant = 0.0;
      if (frozen_zero && (*frozen_zero)[idx]) {
        out.codes[idx] = 0;  // stays exactly zero
      } else {
        const int8_t code = quantize_one(value, out.scales[r], qmax);
        out.codes[idx] = code;
        dequant = static_cast<double>(code) * static_cast<double>(out.scales[r]);
      }
      err[r] = (value - dequant) / cjj;
    }
    for (int r = 0; r < w.rows; ++r) {
      if (err[r] == 0.0) continue;
      const double e = err[r];
      double* row = wd.row(r);
      const double* crow = f.upper.row(j);
      for (int k = j + 1; k < w.cols; ++k) row[k] -= e * crow[k];
    }
  }
  return out;
}

double reconstruction_error(const Matrix& w, const Matrix& w_hat, const Matrix& calib_x) {
  if (!w.same_shape(w_hat) || calib_x.cols != w.cols)
    throw ContractViolation("reconstruction_error: shape mismatch");
  double total = 0.0;
  std::vector<double> diff_row(w.cols);
  for (int r = 0; r < w.rows; ++r) {
    for (int c = 0; c < w.cols; ++c)
      diff_row[c] = static_cast<double>(w.at(r, c)) - w_hat.at(r, c);
    for (int s = 0; s < calib_x.rows; ++s) {
      const float* x = calib_x.row(s);
      double acc = 0.0;
      for (int c = 0; c < w.cols; ++c) acc += diff_row[c] * x[c];
      total += acc * acc;
    }
  }
  return std::sqrt(total);
}

bool check_two_of_four(const Matrix& w) {
  if (w.cols % 4 != 0) return false;
  for (int r = 0; r < w.rows; ++r)
    for (int g = 0; g < w.cols / 4; ++g) {
      int nonzero = 0;
      for (int j = 0; j < 4; ++j) nonzero += w.at(r, g * 4 + j) != 0.0f;
      if (nonzero > 2) return false;
    }
  return true;
}

namespace {

// Keep the `keep` highest-scoring indices; ties keep the lowest index.
std::vector<int> top_indices(std::span<const double> scores, int keep) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&scores](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return order;
}

SparsifyResult sparsify_magnitude(const Matrix& w, SparsePattern pattern, double ratio) {
  SparsifyResult out;
  out.values = w;
  out.mask.assign(w.data.size(), 1);
  if (pattern == SparsePattern::two_of_four) {
    for (int r = 0; r < w.rows; ++r)
      for (int g = 0; g < w.cols / 4; ++g) {
        double scores[4];
        for (int j = 0; j < 4; ++j) scores[j] = std::fabs(w.at(r, g * 4 + j));
        const auto kept = top_indices(scores, 2);
        for (int j = 0; j < 4; ++j) {
          if (std::find(kept.begin(), kept.end(), j) == kept.end()) {
            out.values.at(r, g * 4 + j) = 0.0f;
            out.mask[static_cast<size_t>(r) * w.cols + g * 4 + j] = 0;
          }
        }
      }
  } else {
    const auto n = w.data.size();
    const auto drop = static_cast<size_t>(ratio * static_cast<double>(n));
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    // Drop the smallest magnitudes; on ties the higher index goes first,
    // which keeps the lowest-index entries.
    std::stable_sort(order.begin(), order.end(), [&w](size_t a, size_t b) {
      const float fa = std::fabs(w.data[a]);
      const float fb = std::fabs(w.data[b]);
      if (fa != fb) return fa < fb;
      return a > b;
    });
    for (size_t i = 0; i < drop; ++i) {
      out.values.data[order[i]] = 0.0f;
      out.mask[order[i]] = 0;
    }
  }
  return out;
}

SparsifyResult sparsify_compensated(const Matrix& w, SparsePattern pattern, double ratio,
                                    const Matrix& calib_x, double lambda_rel) {
  const InverseFactor f = inverse_factor(calib_x, w.cols, lambda_rel);
  SparsifyResult out;
  out.mask.assign(w.data.size(), 1);

  MatrixD wd(w.rows, w.cols);
  for (size_t i = 0; i < w.data.size(); ++i) wd.data[i] = w.data[i];

  if (pattern == SparsePattern::unstructured) {
    // Global mask from scores on the original weights, then one
    // compensation sweep.
    std::vector<double> scores(w.data.size());
    for (int r = 0; r < w.rows; ++r)
      for (int c = 0; c < w.cols; ++c)
        scores[static_cast<size_t>(r) * w.cols + c] =
            static_cast<double>(w.at(r, c)) * w.at(r, c) / f.inv_diag[c];
    const auto n = w.data.size();
    const auto drop = static_cast<size_t>(ratio * static_cast<double>(n));
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(), [&scores](size_t a, size_t b) {
      if (scores[a] != scores[b]) return scores[a] < scores[b];
      return a > b;
    });
    for (size_t i = 0; i < drop; ++i) out.mask[order[i]] = 0;
  }

  std::vector<double> err(w.rows);
  for (int j = 0; j < w.cols; ++j) {
    if (pattern == SparsePattern::two_of_four && j % 4 == 0) {
      // Group decision on current (already compensated) weights.
      for (int r = 0; r < w.rows; ++r) {
        double scores[4];
        for (int g = 0; g < 4; ++g) {
          const double v = wd.at(r, j + g);
          scores[g] = v * v / f.inv_diag[j + g];
        }
        const auto kept = top_indices(scores, 2);
        for (int g = 0; g < 4; ++g)
          if (std::find(kept.begin(), kept.end(), g) == kept.end())
            out.mask[static_cast<size_t>(r) * w.cols + j + g] = 0;
      }
    }
    const double cjj = f.upper.at(j, j);
    for (int r = 0; r < w.rows; ++r) {
      const size_t idx = static_cast<size_t>(r) * w.cols + j;
      err[r] = out.mask[idx] ? 0.0 : wd.at(r, j) / cjj;
    }
    for (int r = 0; r < w.rows; ++r) {
      if (err[r] == 0.0) continue;
      const double e = err[r];
      double* row = wd.row(r);
      const double* crow = f.upper.row(j);
      for (int k = j + 1; k < w.cols; ++k) row[k] -= e * crow[k];
    }
  }

  out.values = Matrix(w.rows, w.cols);
  for (int r = 0; r < w.rows; ++r)
    for (int c = 0; c < w.cols; ++c) {
      const size_t idx = static_cast<size_t>(r) * w.cols + c;
      out.values.data[idx] = out.mask[idx] ? static_cast<float>(wd.data[idx]) : 0.0f;
    }
  return out;
}

}  // namespace

SparsifyResult sparsify(const Matrix& w, SparsePattern pattern, double ratio,
                        SparsifyMethod method, const Matrix* calib_x, double lambda_rel) {
  if (pattern == SparsePattern::two_of_four && w.cols % 4 != 0)
    throw PatternMismatch("sparsify: input dimension " + std::to_string(w.cols) +
                          " not divisible by 4");
  if (pattern == SparsePattern::unstructured && (ratio < 0.0 || ratio >= 1.0))
    throw ContractViolation("sparsify: ratio must be in [0, 1)");
  if (method == SparsifyMethod::magnitude) return sparsify_magnitude(w, pattern, ratio);
  if (!calib_x) throw ContractViolation("sparsify: compensated method needs calibration inputs");
  return sparsify_compensated(w, pattern, ratio, *calib_x, lambda_rel);
}

}  // namespace iolm
