// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "iolm/calib.hpp"
#include "iolm/model.hpp"

namespace iolm {

// Physically removes the least important attention heads and FFN channels
// per layer. Head importance is the mean L2 norm of the head's contribution
// to the attention output over calibration tokens; channel importance is
// mean |activation| times the outgoing column's L2 norm. floor(ratio * n)
// lowest-importance units are removed per layer (ties remove the highest
// index), never below one unit. Tensors shrink; interface dims are
// unchanged. Expects a dense-encoded bundle (pruning runs before any
// quantization step).
ModelBundle prune_structural(const ModelBundle& bundle, const CalibrationSet& calib,
                             double head_ratio, double ffn_ratio);

}  // namespace iolm
