// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "iolm/model.hpp"
#include "iolm/rng.hpp"
#include "iolm/runtime.hpp"
#include "iolm/tasks.hpp"

namespace iolm {

// Adam defaults; only step count and batch size are tuned per call site.
struct TrainOptions {
  int batch_size = 12;
  float lr = 3e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  int log_every = 100;
  std::function<void(int step, double loss)> progress;  // optional
  // Optional periodic snapshot (also fired after the final step).
  int checkpoint_every = 0;
  std::function<void(int step, const ModelBundle&)> checkpoint;
};

struct TrainLog {
  std::vector<std::pair<int, double>> curve;  // (step, batch loss)
};

// Trainable f32 parameter set; tensor layout mirrors the bundle exactly.
struct ToyModelParams {
  ModelConfig config;
  Matrix tok_embed, pos_embed;
  struct Layer {
    Matrix ln1_g, ln1_b, wq, wk, wv, wo, ln2_g, ln2_b, w_in, w_out;
  };
  std::vector<Layer> layers;
  Matrix lnf_g, lnf_b;

  static ToyModelParams init(const ModelConfig& config, Rng& rng);
  static ToyModelParams zeros_like(const ToyModelParams& other);
  static ToyModelParams from_bundle(const ModelBundle& bundle);
  ModelBundle to_bundle() const;

  // Visits every tensor in canonical order.
  void for_each(const std::function<void(const std::string&, Matrix&)>& fn);
  void for_each(const std::function<void(const std::string&, const Matrix&)>& fn) const;
};

// A token sequence with its scored span: positions loss_start .. size-2
// predict the next token (the completion plus EOS).
struct TrainSequence {
  std::vector<int> ids;
  int loss_start = 0;
};

TrainSequence build_train_sequence(const Example& example);

// Cross-entropy over the scored span: (sum of position losses, positions).
// The Real parameter exists so finite-difference checks can evaluate the
// loss in double precision.
template <typename Real>
std::pair<double, int> sequence_loss(const ToyModelParams& params, const TrainSequence& seq);

// f32 backpropagation; grads += d(sum-of-position-losses)/dtheta * weight.
// Returns the same (sum, count) pair as sequence_loss<float>.
std::pair<double, int> sequence_loss_and_grad(const ToyModelParams& params,
                                              const TrainSequence& seq, double weight,
                                              ToyModelParams& grads);

// Trains a fresh model on a mix of the synthetic tasks with Adam
// (lr 3e-4, beta1 0.9, beta2 0.999, eps 1e-8), cross-entropy over target
// spans only. steps == 0 returns the initialized bundle unchanged.
// Throws TrainingDiverged if the loss becomes non-finite.
ModelBundle train_toy(const ModelConfig& config, const std::vector<TaskKind>& tasks, int steps,
                      Rng& rng, const TrainOptions& options = {}, TrainLog* log = nullptr);

// Greedy exact-match rate over n freshly generated samples of a task.
double exact_match_rate(const ModelRuntime& runtime, TaskKind kind, int n, Rng& rng,
                        int max_new_tokens = 48);

}  // namespace iolm
