// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace iolm {

// Character-level tokenizer: bytes 0..127 map to ids 0..127, plus PAD, BOS,
// EOS. decode(encode(s)) == s for every ASCII string.
class Tokenizer {
 public:
  static constexpr int kVocabSize = 131;
  static constexpr int kPad = 128;
  static constexpr int kBos = 129;
  static constexpr int kEos = 130;

  // Throws ContractViolation on non-ASCII bytes.
  static std::vector<int> encode(std::string_view text);

  // Renders ids 0..127 as characters; PAD and BOS render as nothing.
  // Throws on EOS or out-of-range ids (callers strip EOS before decoding).
  static std::string decode(std::span<const int> ids);
};

}  // namespace iolm
