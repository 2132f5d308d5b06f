// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "iolm/compress.hpp"
#include "iolm/exec.hpp"
#include "iolm/model.hpp"
#include "iolm/recipe.hpp"
#include "iolm/rng.hpp"
#include "iolm/sql.hpp"
#include "iolm/table.hpp"

namespace iolm {

// Compression aggressiveness preset. baseline runs the input model as-is;
// acc favours fidelity; perf favours throughput.
struct OptimizationProfile {
  std::string name;  // "baseline" | "acc" | "perf" (custom names allowed)
  CompressionRecipe recipe;

  static OptimizationProfile baseline();
  static OptimizationProfile acc();   // gptq 8-bit, K=128, tau=0.95, M=64
  static OptimizationProfile perf();  // prune .5/.5 + compensated 2:4 + gptq 8-bit, tau=0.85
  static OptimizationProfile by_name(const std::string& name);

  uint64_t key_hash() const;  // name + full recipe parameters
};

// 64-bit identity of a table's schema plus a seeded 256-row sample.
uint64_t table_fingerprint(const Table& table, uint64_t seed = 0xF1A9);

// Persistent map from (prompt-template hash, table fingerprint, profile) to
// specialized bundle files. The index is a JSON file next to the bundles;
// updates write a temp file and rename over it.
class ModelRegistry {
 public:
  struct Hit {
    ModelBundle bundle;
    double score = 1.0;  // validation score recorded when stored
  };

  explicit ModelRegistry(const std::string& directory);

  // Returns the stored bundle when present and hash-valid; drops and
  // ignores entries whose file is missing or no longer matches its hash.
  std::optional<Hit> lookup(uint64_t key) const;
  std::string store(uint64_t key, const ModelBundle& bundle, double score);  // returns path

  const std::string& directory() const { return dir_; }

 private:
  struct Entry {
    std::string path;
    std::string hash;
    double score = 1.0;
  };

  void load_index();
  void save_index() const;

  std::string dir_;
  std::map<std::string, Entry> index_;
};

// Renders the per-row prompts a plan's prompt-bearing operator would send:
// the PromptOp template over each input row, or the semantic-join match
// prompt over blocked candidate pairs.
std::vector<std::string> collect_prompt_stream(const QueryPlan& plan,
                                               const std::map<std::string, Table>& tables);
// The template's identity for registry keying (canonical printed form).
uint64_t plan_template_hash(const QueryPlan& plan);

// Seeded reservoir sample of up to k rendered prompts, in original stream
// order. Deterministic per seed; uniform over subsets.
std::vector<std::string> sample_calibration_rows(const Table& table, const QueryPlan& plan,
                                                 int k, Rng& rng);
std::vector<std::string> sample_prompts(const std::vector<std::string>& stream, int k, Rng& rng);

// Mean token-level F1 between candidate and baseline outputs over the
// holdout (whitespace tokens; empty vs empty scores 1).
struct ValidationReport {
  double score = 0.0;
  bool pass = false;
  double exact_match = 0.0;
  std::vector<double> per_row;
};
double token_f1(const std::string& candidate, const std::string& baseline);
ValidationReport validate(const ModelRuntime& candidate, const ModelRuntime& baseline,
                          const std::vector<std::string>& holdout, double tau,
                          int max_new_tokens, FlopCounter& counter);

// One attempt record per profile tried (perf -> acc -> baseline).
struct SpecializeAttempt {
  std::string profile;
  bool from_registry = false;
  bool passed = false;
  double score = 0.0;
  std::vector<std::string> events;
};

struct SpecializeResult {
  ModelBundle bundle;
  std::string profile_used;
  double validation_score = 1.0;
  bool from_registry = false;
  std::vector<SpecializeAttempt> attempts;
  double specialize_seconds = 0.0;
  std::string bundle_path;  // empty for baseline
};

// The per-query workflow: check the registry, otherwise sample calibration
// rows from the actual table, compress, and validate against the baseline
// on a held-out sample. Validation failure falls back perf -> acc ->
// baseline; the result is always runnable.
SpecializeResult specialize(const ModelBundle& baseline, const std::map<std::string, Table>& tables,
                            const QueryPlan& plan, const OptimizationProfile& profile,
                            ModelRegistry* registry, Rng& rng, int max_new_tokens,
                            FlopCounter& counter);

}  // namespace iolm
