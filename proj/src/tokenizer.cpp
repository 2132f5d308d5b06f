// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#include "iolm/tokenizer.hpp"

#include "iolm/common.hpp"

namespace iolm {

std::vector<int> Tokenizer::encode(std::string_view text) {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (size_t i = 0; i < text.size(); ++i) {
    const auto b = static_cast<unsigned char>(text[i]);
    if (b > 127)
      throw ContractViolation("Tokenizer: non-ASCII byte " + std::to_string(b) +
                              " at offset " + std::to_string(i));
    ids.push_back(static_cast<int>(b));
  }
  return ids;
}

std::string Tokenizer::decode(std::span<const int> ids) {
  std::string out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (id >= 0 && id <= 127) {
      out.push_back(static_cast<char>(id));
    } else if (id == kPad || id == kBos) {
      // dropped from rendered text
    } else {
      throw ContractViolation("Tokenizer: cannot decode id " + std::to_string(id));
    }
  }
  return out;
}

}  // namespace iolm
