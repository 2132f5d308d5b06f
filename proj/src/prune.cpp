// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#include "iolm/prune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "iolm/common.hpp"
#include "iolm/fastmath.hpp"

namespace iolm {

namespace {

// Indices of the `keep` highest-importance units, ascending; ties drop the
// highest index first.
std::vector<int> keep_indices(const std::vector<double>& importance, int keep) {
  std::vector<int> order(importance.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&importance](int a, int b) {
    if (importance[a] != importance[b]) return importance[a] > importance[b];
    return a < b;
  });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return order;
}

Matrix keep_rows(const Matrix& m, const std::vector<int>& rows_per_unit, int unit_rows) {
  Matrix out(static_cast<int>(rows_per_unit.size()) * unit_rows, m.cols);
  int dst = 0;
  for (int unit : rows_per_unit)
    for (int j = 0; j < unit_rows; ++j, ++dst)
      std::copy_n(m.row(unit * unit_rows + j), m.cols, out.row(dst));
  return out;
}

Matrix keep_cols(const Matrix& m, const std::vector<int>& cols_per_unit, int unit_cols) {
  Matrix out(m.rows, static_cast<int>(cols_per_unit.size()) * unit_cols);
  for (int r = 0; r < m.rows; ++r) {
    int dst = 0;
    for (int unit : cols_per_unit)
      for (int j = 0; j < unit_cols; ++j, ++dst) out.at(r, dst) = m.at(r, unit * unit_cols + j);
  }
  return out;
}

}  // namespace

ModelBundle prune_structural(const ModelBundle& bundle, const CalibrationSet& calib,
                             double head_ratio, double ffn_ratio) {
  if (head_ratio < 0.0 || head_ratio >= 1.0 || ffn_ratio < 0.0 || ffn_ratio >= 1.0)
    throw ContractViolation("prune_structural: ratios must be in [0, 1)");
  bundle.validate();

  const ModelConfig& cfg = bundle.config;
  const int hd = cfg.head_dim();
  ModelConfig pruned_cfg = cfg;
  ModelBundle out;

  out.append_dense("tok_embed", bundle.decode_tensor("tok_embed"));
  out.append_dense("pos_embed", bundle.decode_tensor("pos_embed"));

  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    const Matrix wq = bundle.decode_tensor(p + "attn.wq");
    const Matrix wk = bundle.decode_tensor(p + "attn.wk");
    const Matrix wv = bundle.decode_tensor(p + "attn.wv");
    const Matrix wo = bundle.decode_tensor(p + "attn.wo");
    const Matrix w_in = bundle.decode_tensor(p + "ffn.w_in");
    const Matrix w_out = bundle.decode_tensor(p + "ffn.w_out");

    const int heads = cfg.layer_heads(l);
    const Matrix& z = calib.input_for(p + "attn.wo");  // samples x heads*hd
    if (z.cols != heads * hd)
      throw ContractViolation("prune_structural: calibration captured for a different shape");

    // Head importance: mean L2 of Wo[:, head block] * z_head over tokens.
    std::vector<double> head_importance(heads, 0.0);
    for (int h = 0; h < heads; ++h) {
      Matrix z_h(z.rows, hd);
      for (int s = 0; s < z.rows; ++s) std::copy_n(z.row(s) + h * hd, hd, z_h.row(s));
      Matrix wo_block(wo.rows, hd);
      for (int r = 0; r < wo.rows; ++r) std::copy_n(wo.row(r) + h * hd, hd, wo_block.row(r));
      Matrix contrib(z.rows, wo.rows);
      fastmath::gemm_bt(z_h, wo_block, contrib);
      double total = 0.0;
      for (int s = 0; s < contrib.rows; ++s) {
        double norm_sq = 0.0;
        for (int c = 0; c < contrib.cols; ++c)
          norm_sq += static_cast<double>(contrib.at(s, c)) * contrib.at(s, c);
        total += std::sqrt(norm_sq);
      }
      head_importance[h] = total / contrib.rows;
    }
    const int head_drop = std::min(static_cast<int>(head_ratio * heads), heads - 1);
    const auto kept_heads = keep_indices(head_importance, heads - head_drop);

    // FFN channel importance: mean |activation| * outgoing column L2.
    const int f = cfg.layer_ffn(l);
    const Matrix& g = calib.input_for(p + "ffn.w_out");  // samples x f
    if (g.cols != f)
      throw ContractViolation("prune_structural: calibration captured for a different shape");
    std::vector<double> ffn_importance(f, 0.0);
    for (int c = 0; c < f; ++c) {
      double mean_abs = 0.0;
      for (int s = 0; s < g.rows; ++s) mean_abs += std::fabs(g.at(s, c));
      mean_abs /= g.rows;
      double col_sq = 0.0;
      for (int r = 0; r < w_out.rows; ++r)
        col_sq += static_cast<double>(w_out.at(r, c)) * w_out.at(r, c);
      ffn_importance[c] = mean_abs * std::sqrt(col_sq);
    }
    const int ffn_drop = std::min(static_cast<int>(ffn_ratio * f), f - 1);
    const auto kept_ffn = keep_indices(ffn_importance, f - ffn_drop);

    // Physically shrink. Kept heads/channels stay in ascending order.
    out.append_dense(p + "attn_norm.gain", bundle.decode_tensor(p + "attn_norm.gain"));
    out.append_dense(p + "attn_norm.bias", bundle.decode_tensor(p + "attn_norm.bias"));
    out.append_dense(p + "attn.wq", keep_rows(wq, kept_heads, hd));
    out.append_dense(p + "attn.wk", keep_rows(wk, kept_heads, hd));
    out.append_dense(p + "attn.wv", keep_rows(wv, kept_heads, hd));
    out.append_dense(p + "attn.wo", keep_cols(wo, kept_heads, hd));
    out.append_dense(p + "ffn_norm.gain", bundle.decode_tensor(p + "ffn_norm.gain"));
    out.append_dense(p + "ffn_norm.bias", bundle.decode_tensor(p + "ffn_norm.bias"));
    out.append_dense(p + "ffn.w_in", keep_rows(w_in, kept_ffn, 1));
    out.append_dense(p + "ffn.w_out", keep_cols(w_out, kept_ffn, 1));

    // Map kept positions back to original head indices for the config.
    std::vector<int> orig_heads;
    for (int idx : kept_heads) orig_heads.push_back(cfg.active_heads[l][idx]);
    pruned_cfg.active_heads[l] = orig_heads;
    pruned_cfg.active_ffn[l] = f - ffn_drop;
  }

  out.append_dense("final_norm.gain", bundle.decode_tensor("final_norm.gain"));
  out.append_dense("final_norm.bias", bundle.decode_tensor("final_norm.bias"));
  out.config = pruned_cfg;
  out.recipe_id = bundle.recipe_id;
  out.parent_hash = bundle.parent_hash;
  out.validate();
  return out;
}

}  // namespace iolm
