// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#include "iolm/compress.hpp"

#include "iolm/common.hpp"
#include "iolm/prune.hpp"
#include "iolm/runtime.hpp"

namespace iolm {

namespace {

bool is_weight_tensor(const std::string& name) {
  return name.find(".attn.w") != std::string::npos || name.find(".ffn.w") != std::string::npos;
}

void log_event(std::vector<std::string>* events, const std::string& line) {
  if (events) events->push_back(line);
}

// Packs a 2:4 mask + per-element codes into the sparse24 payload form.
void append_sparse24(ModelBundle& out, const std::string& name, const Matrix& shape_ref,
                     const std::vector<int8_t>& codes, const std::vector<uint8_t>& mask,
                     const std::vector<float>& scales) {
  const int rows = shape_ref.rows;
  const int cols = shape_ref.cols;
  const int groups = cols / 4;
  std::vector<int8_t> kept_codes;
  std::vector<uint8_t> positions;
  kept_codes.reserve(static_cast<size_t>(rows) * groups * 2);
  positions.reserve(kept_codes.capacity());
  for (int r = 0; r < rows; ++r)
    for (int g = 0; g < groups; ++g) {
      int found = 0;
      for (int j = 0; j < 4 && found < 2; ++j) {
        const size_t idx = static_cast<size_t>(r) * cols + g * 4 + j;
        if (mask[idx]) {
          kept_codes.push_back(codes[idx]);
          positions.push_back(static_cast<uint8_t>(j));
          ++found;
        }
      }
      if (found != 2)
        throw PatternMismatch("apply_recipe: group without exactly 2 kept values in " + name);
    }
  out.append_sparse24_q8(name, rows, cols, kept_codes, positions, scales);
}

}  // namespace

ModelBundle apply_recipe(const ModelBundle& bundle, const CompressionRecipe& recipe,
                         const CalibrationSet& calib, std::vector<std::string>* events) {
  bundle.validate();
  if (recipe.empty()) return bundle;

  ModelBundle working = bundle;
  CalibrationSet recaptured;
  const CalibrationSet* active_calib = &calib;

  if (recipe.prune) {
    working = prune_structural(working, calib, recipe.prune->head_ratio, recipe.prune->ffn_ratio);
    log_event(events, "prune: heads/channels reduced, re-capturing calibration");
    ModelRuntime runtime(working);
    Rng rng(calib.fingerprint);
    recaptured = capture_calibration(runtime, calib.prompts,
                                     static_cast<int>(calib.prompts.size()), rng);
    active_calib = &recaptured;
  }

  ModelBundle out;
  out.config = working.config;
  for (const std::string& name : required_tensor_names(working.config)) {
    Matrix w = working.decode_tensor(name);
    if (!is_weight_tensor(name)) {
      out.append_dense(name, w);
      continue;
    }

    std::vector<uint8_t> mask;
    bool sparsified_24 = false;
    if (recipe.sparsify) {
      const auto& step = *recipe.sparsify;
      SparsifyMethod method = step.method;
      const Matrix* x = &active_calib->input_for(name);
      for (;;) {
        try {
          SparsifyResult res = sparsify(w, step.pattern, step.ratio, method, x, recipe.lambda_rel);
          w = std::move(res.values);
          mask = std::move(res.mask);
          sparsified_24 = step.pattern == SparsePattern::two_of_four;
          break;
        } catch (const CalibrationIllConditioned& e) {
          if (method == SparsifyMethod::compensated) {
            log_event(events, name + ": compensated sparsify failed (" + e.what() +
                                  "); falling back to magnitude");
            method = SparsifyMethod::magnitude;
            continue;
          }
          log_event(events, name + ": sparsify failed (" + std::string(e.what()) + "); dropped");
          break;
        } catch (const PatternMismatch& e) {
          log_event(events, name + ": sparsify failed (" + std::string(e.what()) + "); dropped");
          break;
        }
      }
    }

    if (recipe.quantize) {
      const auto& step = *recipe.quantize;
      QuantResult q;
      bool quantized = false;
      if (step.method == CompressionRecipe::QuantizeStep::Method::gptq) {
        try {
          std::vector<uint8_t> frozen;
          if (!mask.empty()) {
            frozen.resize(mask.size());
            for (size_t i = 0; i < mask.size(); ++i) frozen[i] = mask[i] ? 0 : 1;
          }
          q = quantize_gptq(w, active_calib->input_for(name), step.bits, recipe.lambda_rel,
                            mask.empty() ? nullptr : &frozen);
          quantized = true;
        } catch (const CalibrationIllConditioned& e) {
          log_event(events,
                    name + ": gptq failed (" + std::string(e.what()) + "); falling back to rtn");
        }
      }
      if (!quantized) q = quantize_rtn(w, step.bits);

      if (step.bits == 8 && sparsified_24) {
        append_sparse24(out, name, w, q.codes, mask, q.scales);
      } else if (step.bits == 8) {
        out.append_q8(name, w.rows, w.cols, q.codes, q.scales);
      } else {
        out.append_q4(name, w.rows, w.cols, q.codes, q.scales);
      }
    } else {
      out.append_dense(name, w);
    }
  }

  out.recipe_id = recipe.id();
  out.parent_hash = bundle.hash_hex();
  out.validate();
  return out;
}

uint64_t estimate_size(const ModelBundle& bundle) {
  uint64_t total = 0;
  for (const auto& t : bundle.tensors) total += t.length;
  return total;
}

uint64_t estimate_decode_flops(const ModelBundle& bundle, int prompt_len, int new_tokens) {
  return decode_flops(bundle.config, prompt_len, new_tokens);
}

}  // namespace iolm
