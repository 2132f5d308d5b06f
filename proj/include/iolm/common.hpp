// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace iolm {

// Base class for all recoverable engine errors. Subclasses carry enough
// context (indices, positions) for callers to produce actionable messages.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Precondition / API-misuse failures.
class ContractViolation : public Error {
 public:
  explicit ContractViolation(const std::string& what) : Error(what) {}
};

class NotPositiveDefinite : public Error {
 public:
  NotPositiveDefinite(int pivot, const std::string& what)
      : Error(what), pivot_index(pivot) {}
  int pivot_index;
};

class SequenceTooLong : public Error {
 public:
  explicit SequenceTooLong(const std::string& what) : Error(what) {}
};

class TrainingDiverged : public Error {
 public:
  explicit TrainingDiverged(const std::string& what) : Error(what) {}
};

class EmptyCalibration : public Error {
 public:
  explicit EmptyCalibration(const std::string& what) : Error(what) {}
};

class CalibrationIllConditioned : public Error {
 public:
  explicit CalibrationIllConditioned(const std::string& what) : Error(what) {}
};

class PatternMismatch : public Error {
 public:
  explicit PatternMismatch(const std::string& what) : Error(what) {}
};

// Bundle file errors, one class per failure mode so tests can tell them apart.
class CorruptHeader : public Error {
 public:
  explicit CorruptHeader(const std::string& what) : Error(what) {}
};
class TruncatedBlob : public Error {
 public:
  explicit TruncatedBlob(const std::string& what) : Error(what) {}
};
class UnknownEncoding : public Error {
 public:
  explicit UnknownEncoding(const std::string& what) : Error(what) {}
};

class IngestError : public Error {
 public:
  IngestError(int row, const std::string& what) : Error(what), row(row) {}
  int row;  // 1-based data row, 0 when not row-specific
};

// SQL syntax error with a 1-based source position and the token set the
// parser would have accepted at that point.
class ParseError : public Error {
 public:
  ParseError(int line, int column, std::vector<std::string> expected,
             const std::string& what)
      : Error(what), line(line), column(column), expected(std::move(expected)) {}
  int line;
  int column;
  std::vector<std::string> expected;
};

// 64-bit FNV-1a. Used for bundle hashes, cache keys, and fingerprints; all
// persisted hashes in the project go through these two functions. The raw
// form carries a distinct name so a const char* can never silently bind to
// the (pointer, length) signature.
inline uint64_t fnv1a64_bytes(const void* data, size_t len,
                              uint64_t seed = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t seed = 0xcbf29ce484222325ull) {
  return fnv1a64_bytes(s.data(), s.size(), seed);
}

std::string to_hex(uint64_t v);

}  // namespace iolm
