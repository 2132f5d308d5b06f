// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "iolm/calib.hpp"
#include "iolm/model.hpp"
#include "iolm/recipe.hpp"

namespace iolm {

// Applies a recipe to a bundle: prune first (calibration is re-captured on
// the pruned architecture, since the shapes changed), then sparsify, then
// quantize, per transformer linear weight. Embeddings and norms stay dense.
// Provenance records the recipe id and the parent bundle hash.
//
// Step failures fall back instead of aborting: gptq degrades to rtn and a
// compensated sparsifier to magnitude when the calibration Hessian cannot
// be factored; a step that still fails is dropped. Each event appends one
// line to *events when given.
ModelBundle apply_recipe(const ModelBundle& bundle, const CompressionRecipe& recipe,
                         const CalibrationSet& calib, std::vector<std::string>* events = nullptr);

// Serialized weight payload bytes (tensor payloads only, excluding the
// file header), straight from the tensor records.
uint64_t estimate_size(const ModelBundle& bundle);

// Closed-form decode multiply-adds for this bundle's architecture.
uint64_t estimate_decode_flops(const ModelBundle& bundle, int prompt_len, int new_tokens);

}  // namespace iolm
