// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "iolm/exec.hpp"
#include "iolm/model.hpp"
#include "iolm/optimize.hpp"
#include "iolm/tasks.hpp"

namespace iolm {

struct WorkloadSpec {
  TaskKind kind = TaskKind::summarize;
  int rows = 500;
  uint64_t seed = 0;
};

// Dataset files plus the canonical query for one workload. The oracle file
// holds the exact expected output per row (or the matching pair set for the
// join workload).
struct GeneratedWorkload {
  std::vector<std::pair<std::string, std::string>> tables;  // (table name, file path)
  std::string oracle_path;
  std::string query;
};

GeneratedWorkload generate_workload(const WorkloadSpec& spec, const std::string& dir);

// Per-profile measurements; the text report mirrors the usual
// size / accuracy / throughput comparison columns.
struct ProfileReport {
  std::string profile;        // requested
  std::string profile_used;   // after any fallback
  uint64_t model_file_bytes = 0;
  uint64_t weight_payload_bytes = 0;
  uint64_t decode_flops = 0;
  double flops_per_row = 0.0;
  double validation_score = 1.0;
  double gt_accuracy = 0.0;
  double normalized_accuracy = 1.0;
  double rows_per_second = 0.0;
  double execute_seconds = 0.0;
  double specialize_seconds = 0.0;
  uint64_t rows_processed = 0;
  uint64_t output_rows = 0;
  uint64_t invocations = 0;
  uint64_t cache_hits = 0;
  uint64_t cache_misses = 0;
};

struct RunReport {
  std::string workload;
  int rows = 0;
  uint64_t seed = 0;
  std::vector<ProfileReport> profiles;  // baseline first

  // include_timing=false drops wall-clock-derived fields, leaving only the
  // deterministic part (used by the determinism checks).
  nlohmann::ordered_json to_json(bool include_timing = true) const;
  std::string to_text() const;
};

// End-to-end run: generate the dataset (untimed), ingest, parse the
// canonical query, specialize per profile (timed separately, registry under
// workdir), execute (timed), and score against the oracle. "baseline" is
// always run first so normalized accuracy has its denominator.
RunReport run_benchmark(const WorkloadSpec& spec, const ModelBundle& model,
                        const std::vector<std::string>& profile_names, const std::string& workdir,
                        const ExecOptions& exec_options, uint64_t specialize_seed = 0x5EED);

// Decision accuracy of a produced join result against the oracle over all
// blocked candidate pairs.
double join_decision_accuracy(const Table& left, const Table& right,
                              const std::string& left_col, const std::string& right_col,
                              const std::vector<std::pair<int, int>>& result_pairs,
                              const std::vector<std::pair<int, int>>& oracle_pairs);

}  // namespace iolm
