// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <list>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "iolm/common.hpp"
#include "iolm/runtime.hpp"
#include "iolm/sql.hpp"
#include "iolm/table.hpp"

namespace iolm {

// LRU map from (model, rendered prompt, decode budget) to decoded output.
// Exact-key equality, so a hit can never return the wrong row's answer.
// Thread-safe; capacity 0 disables caching entirely.
class PromptCache {
 public:
  struct Key {
    uint64_t bundle_hash = 0;
    int max_new_tokens = 0;
    std::string prompt;
    bool operator==(const Key&) const = default;
  };

  explicit PromptCache(size_t capacity) : capacity_(capacity) {}

  bool enabled() const { return capacity_ > 0; }
  std::optional<std::string> lookup(const Key& key);
  void insert(const Key& key, const std::string& value);

  size_t size() const;
  uint64_t hits() const { return hits_; }
  uint64_t misses() const { return misses_; }
  uint64_t lookups() const { return hits_ + misses_; }

 private:
  struct Entry {
    Key key;
    std::string value;
  };
  struct KeyHash {
    size_t operator()(const Key& k) const {
      uint64_t h = fnv1a64(k.prompt);
      h = fnv1a64_bytes(&k.bundle_hash, sizeof k.bundle_hash, h);
      h = fnv1a64_bytes(&k.max_new_tokens, sizeof k.max_new_tokens, h);
      return static_cast<size_t>(h);
    }
  };

  mutable std::mutex mu_;
  size_t capacity_;
  std::list<Entry> lru_;  // front = most recent
  std::unordered_map<Key, std::list<Entry>::iterator, KeyHash> index_;
  uint64_t hits_ = 0;
  uint64_t misses_ = 0;
};

// Accumulates (row, prompt) pairs and flushes distinct prompts through
// batch_decode once max_batch distinct prompts are pending. Results come
// back in row order no matter how batches were cut.
struct ExecOptions {
  int batch_size = 16;
  size_t cache_capacity = 65536;
  int max_new_tokens = 48;  // per-row prompt operator budget
};

struct ExecStats {
  uint64_t rows_in = 0;
  uint64_t rows_out = 0;
  uint64_t model_invocations = 0;  // prompts decoded through the model
  uint64_t cache_hits = 0;
  uint64_t cache_misses = 0;
  uint64_t join_pairs_considered = 0;  // after blocking
  uint64_t join_matches = 0;
  uint64_t unparsable_match_answers = 0;
};

// Executes a parsed plan against named tables. Column references are
// resolved against input schemas before any model call; unknown tables or
// columns raise ContractViolation. Decode failures carry the row id.
Table execute(const QueryPlan& plan, const std::map<std::string, Table>& tables,
              const ModelRuntime& model, PromptCache& cache, const ExecOptions& options,
              ExecStats& stats, FlopCounter& counter);

// The deterministic candidate filter of the semantic join: a pair survives
// when the normalized first characters match or the normalized lengths
// differ by at most 2. Normalization lowercases, strips punctuation and
// collapses whitespace (no abbreviation knowledge; engine policy).
bool blocking_pass(const std::string& a, const std::string& b);
std::string engine_normalize(const std::string& s);

// The fixed yes/no match prompt of the semantic join.
std::string semantic_match_prompt(const std::string& a, const std::string& b);

// Rows of `in` satisfying the predicate (used by the executor and by
// calibration sampling, which must see the same rows a query would).
Table filter_rows(const Table& in, const Predicate& pred);

}  // namespace iolm
