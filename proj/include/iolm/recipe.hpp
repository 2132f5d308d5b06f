// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "iolm/quant.hpp"

namespace iolm {

// Declarative compression plan. Steps execute prune -> sparsify -> quantize;
// at most one step of each kind. The JSON schema (docs/format.md) mirrors
// this struct; parsing validates every field with a precise error message.
struct CompressionRecipe {
  struct PruneStep {
    double head_ratio = 0.0;
    double ffn_ratio = 0.0;
  };
  struct SparsifyStep {
    SparsePattern pattern = SparsePattern::two_of_four;
    double ratio = 0.0;  // unstructured only
    SparsifyMethod method = SparsifyMethod::magnitude;
  };
  struct QuantizeStep {
    int bits = 8;
    enum class Method { rtn, gptq } method = Method::rtn;
  };

  std::optional<PruneStep> prune;
  std::optional<SparsifyStep> sparsify;
  std::optional<QuantizeStep> quantize;

  int calibration_k = 128;
  double lambda_rel = 0.01;
  double validation_tau = 0.9;
  int holdout_m = 64;

  bool empty() const { return !prune && !sparsify && !quantize; }

  // Canonical compact text form, stable across runs; doubles as the
  // provenance recipe id.
  std::string id() const;

  nlohmann::ordered_json to_json() const;
  static CompressionRecipe from_json(const nlohmann::json& j);
  static CompressionRecipe from_file(const std::string& path);
};

}  // namespace iolm
