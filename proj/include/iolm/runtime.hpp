// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "iolm/matrix.hpp"
#include "iolm/model.hpp"

namespace iolm {

// Records the inputs every linear weight saw during a forward pass, one row
// per (non-pad) token position. Capture points are shared between tensors
// with identical inputs: "layers.<l>.attn_in" feeds wq/wk/wv,
// "layers.<l>.attn_out_in" feeds wo, "layers.<l>.ffn_in" feeds w_in and
// "layers.<l>.ffn_mid" (post-gelu) feeds w_out.
struct CaptureSink {
  std::map<std::string, std::pair<int, std::vector<float>>> points;  // dim, row-major rows

  void add_row(const std::string& point, std::span<const float> row);
  int sample_count(const std::string& point) const;
  Matrix matrix(const std::string& point) const;  // samples x features
};

// Capture point name feeding a given weight tensor, e.g. "layers.0.attn.wq"
// -> "layers.0.attn_in".
std::string capture_point_for(const std::string& tensor_name);

// Executable model. Construction dequantizes every tensor to f32 once, so a
// compressed bundle and its eagerly-dequantized dense twin run through
// byte-identical weights and produce bit-identical logits.
class ModelRuntime {
 public:
  explicit ModelRuntime(const ModelBundle& bundle);

  const ModelConfig& config() const { return config_; }
  uint64_t bundle_hash() const { return bundle_hash_; }

  // Full-sequence forward: logits for every position (seq_len x vocab).
  // mask may be empty (all positions valid); masked (pad) positions produce
  // rows that callers must not read, and are excluded from attention and
  // from capture. Causal masking is always applied.
  Matrix forward(std::span<const int> ids, std::span<const uint8_t> mask, FlopCounter& counter,
                 CaptureSink* capture = nullptr) const;

  // Deterministic greedy decoding: argmax each step (ties to the lowest
  // token id), stops at EOS or after max_new_tokens. ASCII ids append to
  // the output; PAD/BOS contribute nothing.
  std::string greedy_decode(std::string_view prompt, int max_new_tokens,
                            FlopCounter& counter) const;

  // output[i] is bit-identical to greedy_decode(prompts[i]) regardless of
  // batch composition; decode steps run in lockstep with stacked matmuls.
  std::vector<std::string> batch_decode(std::span<const std::string> prompts, int max_new_tokens,
                                        FlopCounter& counter) const;

 private:
  struct LayerWeights {
    std::vector<float> ln1_gain, ln1_bias, ln2_gain, ln2_bias;
    Matrix wq_t, wk_t, wv_t, wo_t, w_in_t, w_out_t;  // transposed for x*W^T
    int heads = 0;
    int ffn = 0;
  };

  struct SeqState {
    std::vector<Matrix> k, v;  // per layer, max_seq_len x (heads*head_dim)
    std::vector<uint8_t> valid;
    int len = 0;
  };

  struct AdvanceItem {
    SeqState* state;
    int token;
    int pos;
    uint8_t valid;
  };

  SeqState make_state() const;
  // Core shared path: processes one new token per item (items may share a
  // state, e.g. a whole prompt in one call) and returns final-norm rows.
  Matrix advance(std::span<AdvanceItem> items, FlopCounter& counter, CaptureSink* capture) const;
  Matrix logits_for(const Matrix& final_rows, FlopCounter& counter) const;

  ModelConfig config_;
  uint64_t bundle_hash_ = 0;
  Matrix tok_embed_, tok_embed_t_, pos_embed_;
  std::vector<float> lnf_gain_, lnf_bias_;
  std::vector<LayerWeights> layers_;
  float inv_sqrt_head_dim_ = 0.0f;
};

// Closed-form multiply-add count of forward() on an all-valid sequence.
uint64_t full_forward_flops(const ModelConfig& config, int seq_len);

// Closed-form multiply-add count of a greedy decode that emits new_tokens
// tokens from a prompt of prompt_len characters (prefill + one step per
// emitted token, logits head once per forward).
uint64_t decode_flops(const ModelConfig& config, int prompt_len, int new_tokens);

}  // namespace iolm
