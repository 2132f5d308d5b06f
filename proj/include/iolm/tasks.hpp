// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "iolm/rng.hpp"

namespace iolm {

// The three synthetic workloads. Each is a deterministic character-level
// transduction with an exact oracle, so reports can state ground-truth
// accuracy instead of judging outputs against a larger model.
enum class TaskKind { summarize, correct, fuzzyjoin };

const char* task_name(TaskKind kind);
TaskKind task_from_name(const std::string& name);  // throws ContractViolation

struct Example {
  std::string prompt;
  std::string completion;
};

// Word pool for reviews and entity names.
const std::vector<std::string>& review_lexicon();
// 512 pseudo-words; equal-length words differ in at least 3 positions, so a
// single-character corruption always has a unique source word.
const std::vector<std::string>& typo_lexicon();
// Per-letter substitution candidates (keyboard neighbours).
const std::string& confusion_candidates(char c);
// (abbreviation, expansion) pairs; expansions preserve the first letter.
const std::vector<std::pair<std::string, std::string>>& abbreviation_table();

// Prompt templates. The trainer and the benchmark queries must agree on
// these byte-for-byte, so they live here and nowhere else.
std::string render_summarize_prompt(const std::string& review);
std::string render_correct_prompt(const std::string& word);
std::string render_match_prompt(const std::string& a, const std::string& b);

// First five whitespace-separated words.
std::string summarize_target(const std::string& review);
// Canonical entity form: casefold, strip punctuation, collapse whitespace,
// expand abbreviations token-wise.
std::string normalize_entity(const std::string& s);

// Corrupts exactly one character via the confusion table.
std::string corrupt_word(const std::string& word, Rng& rng);

// Entity machinery for the fuzzy-join task.
struct Entity {
  int word_idx;
  int suffix_idx;
};
std::string entity_canonical(const Entity& e);
// Random surface form: abbreviated or expanded suffix, random casing,
// optional trailing punctuation.
std::string entity_variant(const Entity& e, Rng& rng);

std::string random_review(Rng& rng);  // 5..8 lexicon words

Example make_training_example(TaskKind kind, Rng& rng);

// Row-level dataset views used by both the generators and the benchmark.
struct SummarizeRow {
  int product_id;
  int user_id;
  std::string review;
  std::string expected;
};
struct CorrectRow {
  int id;
  std::string word;
  std::string expected;
};
struct FuzzyJoinData {
  std::vector<std::pair<int, std::string>> left;   // (lid, lname)
  std::vector<std::pair<int, std::string>> right;  // (rid, rname)
  std::vector<std::pair<int, int>> matches;        // oracle: normalized-equal pairs
};

std::vector<SummarizeRow> generate_summarize_rows(int rows, uint64_t seed);
std::vector<CorrectRow> generate_correct_rows(int rows, uint64_t seed);
FuzzyJoinData generate_fuzzyjoin_data(int rows, uint64_t seed);

}  // namespace iolm
