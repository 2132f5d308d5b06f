// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#include "iolm/calib.hpp"

#include "iolm/common.hpp"
#include "iolm/fastmath.hpp"
#include "iolm/tokenizer.hpp"

namespace iolm {

const Matrix& CalibrationSet::input_for(const std::string& tensor_name) const {
  const std::string point = capture_point_for(tensor_name);
  auto it = inputs.find(point);
  if (it == inputs.end())
    throw ContractViolation("CalibrationSet: no captured inputs for " + tensor_name);
  return it->second;
}

CalibrationSet capture_calibration(const ModelRuntime& runtime,
                                   std::span<const std::string> prompts, int k, Rng& rng) {
  if (prompts.empty()) throw EmptyCalibration("capture_calibration: empty prompt list");
  if (k < 1) throw ContractViolation("capture_calibration: k must be >= 1");

  std::vector<std::string> selected;
  if (k >= static_cast<int>(prompts.size())) {
    selected.assign(prompts.begin(), prompts.end());
  } else {
    // Reservoir sample of k indices, emitted in original order.
    std::vector<size_t> picked(k);
    for (int i = 0; i < k; ++i) picked[i] = i;
    for (size_t i = k; i < prompts.size(); ++i) {
      const uint64_t j = rng.next_below(i + 1);
      if (j < static_cast<uint64_t>(k)) picked[j] = i;
    }
    std::sort(picked.begin(), picked.end());
    for (size_t idx : picked) selected.push_back(prompts[idx]);
  }

  CalibrationSet calib;
  calib.prompts = selected;
  calib.sample_count = static_cast<int>(selected.size());

  CaptureSink sink;
  FlopCounter fc;
  for (const auto& prompt : selected) {
    std::vector<int> ids{Tokenizer::kBos};
    for (int id : Tokenizer::encode(prompt)) ids.push_back(id);
    runtime.forward(ids, {}, fc, &sink);
  }
  for (const auto& [point, _] : sink.points) calib.inputs[point] = sink.matrix(point);

  uint64_t h = fnv1a64("calibration");
  const uint64_t model_hash = runtime.bundle_hash();
  h = fnv1a64_bytes(&model_hash, sizeof model_hash, h);
  for (const auto& p : calib.prompts) {
    h = fnv1a64(p, h);
    h = fnv1a64("\x1f", h);
  }
  calib.fingerprint = h;
  return calib;
}

MatrixD build_hessian(const Matrix& x, double lambda_rel) {
  if (x.rows < 1) throw EmptyCalibration("build_hessian: no calibration samples");
  MatrixD h(x.cols, x.cols);
  fastmath::gram_accumulate(x, 2.0, h);
  double diag_mean = 0.0;
  for (int i = 0; i < h.rows; ++i) diag_mean += h.at(i, i);
  diag_mean /= h.rows;
  const double lambda = lambda_rel * diag_mean;
  for (int i = 0; i < h.rows; ++i) h.at(i, i) += lambda;
  return h;
}

}  // namespace iolm
