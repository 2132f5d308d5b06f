// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iolm/matrix.hpp"

namespace iolm {

// Decoder-only transformer architecture description. Pruned models are
// represented structurally: per-layer lists of surviving attention heads
// (original indices, ascending) and surviving FFN channel counts. Tensors
// are physically shrunk to match, so size and FLOP savings are real.
struct ModelConfig {
  int vocab_size = 131;  // 128 ASCII + PAD + BOS + EOS
  int d_model = 0;
  int n_layers = 0;
  int n_heads = 0;  // head count before any pruning
  int d_ff = 0;     // FFN width before any pruning
  int max_seq_len = 0;
  std::vector<std::vector<int>> active_heads;  // per layer, non-empty
  std::vector<int> active_ffn;                 // per layer, >= 1

  int head_dim() const { return d_model / n_heads; }
  int layer_heads(int layer) const { return static_cast<int>(active_heads[layer].size()); }
  int layer_ffn(int layer) const { return active_ffn[layer]; }

  void validate() const;  // throws ContractViolation
  bool operator==(const ModelConfig&) const = default;

  // Unpruned config with every head and channel active.
  static ModelConfig dense(int d_model, int n_layers, int n_heads, int d_ff, int max_seq_len);
  // The reference toy architecture.
  static ModelConfig reference() { return dense(128, 4, 4, 512, 160); }
};

enum class TensorEncoding : uint8_t {
  dense_f32 = 0,
  q8_perchannel = 1,
  q4_perchannel = 2,
  sparse24_q8 = 3,
};

// One serialized tensor. The payload layout per encoding (codes, packed 2:4
// position indices, per-output-channel scales) is documented in
// docs/format.md; payload_bytes() is the closed form the size estimator and
// the serializer both use.
struct TensorRecord {
  std::string name;
  int rows = 0;
  int cols = 0;
  TensorEncoding encoding = TensorEncoding::dense_f32;
  uint64_t offset = 0;  // into the bundle blob
  uint64_t length = 0;  // bytes

  static uint64_t payload_bytes(int rows, int cols, TensorEncoding enc);
};

// A serialized model: config, tensor index, and one binary blob, plus
// provenance linking a compressed bundle to its parent. Serialization is
// canonical, so the bundle hash is stable across save/load round trips.
struct ModelBundle {
  ModelConfig config;
  std::vector<TensorRecord> tensors;
  std::vector<uint8_t> blob;
  std::string recipe_id;    // empty for trained roots
  std::string parent_hash;  // hex of parent bundle hash, empty for roots

  const TensorRecord* find_tensor(const std::string& name) const;
  const TensorRecord& tensor(const std::string& name) const;  // throws if absent

  // Dequantizes any encoding back to row-major f32. Dequantization is
  // code * scale per element; pruned-away 2:4 positions are exact zeros.
  Matrix decode_tensor(const TensorRecord& rec) const;
  Matrix decode_tensor(const std::string& name) const;

  void append_dense(const std::string& name, const Matrix& values);
  void append_q8(const std::string& name, int rows, int cols,
                 std::span<const int8_t> codes, std::span<const float> scales);
  void append_q4(const std::string& name, int rows, int cols,
                 std::span<const int8_t> codes, std::span<const float> scales);
  // codes: exactly 2 per group of 4, group-major; positions: their column
  // indices within the group (ascending).
  void append_sparse24_q8(const std::string& name, int rows, int cols,
                          std::span<const int8_t> codes, std::span<const uint8_t> positions,
                          std::span<const float> scales);

  // Checks that every tensor the config requires is present with the right
  // shape and a legal encoding. Throws ContractViolation.
  void validate() const;

  uint64_t hash() const;  // FNV-1a over the canonical serialized bytes
  std::string hash_hex() const;
};

// Canonical tensor names for a config, in serialization order.
std::vector<std::string> required_tensor_names(const ModelConfig& config);
// Expected (rows, cols) of a named tensor under a config.
std::pair<int, int> tensor_shape(const ModelConfig& config, const std::string& name);

std::vector<uint8_t> serialize_bundle(const ModelBundle& bundle);
ModelBundle deserialize_bundle(std::span<const uint8_t> bytes);

// File I/O for the "IOLM" header+blob format (docs/format.md).
void save_bundle(const ModelBundle& bundle, const std::string& path);
ModelBundle load_bundle(const std::string& path);

}  // namespace iolm
