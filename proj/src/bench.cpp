// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#include "iolm/bench.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "iolm/common.hpp"
#include "iolm/compress.hpp"

namespace iolm {

namespace {

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("generate: cannot write " + path);
  for (const auto& line : lines) out << line << "\n";
}

std::string json_line(const nlohmann::ordered_json& j) { return j.dump(); }

}  // namespace

GeneratedWorkload generate_workload(const WorkloadSpec& spec, const std::string& dir) {
  std::filesystem::create_directories(dir);
  GeneratedWorkload out;
  const auto path_of = [&dir](const std::string& file) {
    return (std::filesystem::path(dir) / file).string();
  };

  switch (spec.kind) {
    case TaskKind::summarize: {
      const auto rows = generate_summarize_rows(spec.rows, spec.seed);
      std::vector<std::string> data, oracle;
      for (size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        data.push_back(json_line({{"product_id", r.product_id},
                                  {"user_id", r.user_id},
                                  {"review", r.review}}));
        oracle.push_back(json_line({{"row", i}, {"expected", r.expected}}));
      }
      write_lines(path_of("reviews.jsonl"), data);
      write_lines(path_of("oracle.jsonl"), oracle);
      out.tables = {{"reviews", path_of("reviews.jsonl")}};
      out.oracle_path = path_of("oracle.jsonl");
      out.query =
          "SELECT product_id, user_id, "
          "prompt('summarize in 5 words: ' || review) AS review_summary FROM reviews";
      return out;
    }
    case TaskKind::correct: {
      const auto rows = generate_correct_rows(spec.rows, spec.seed);
      std::vector<std::string> data, oracle;
      for (const auto& r : rows) {
        data.push_back(json_line({{"id", r.id}, {"word", r.word}}));
        oracle.push_back(json_line({{"row", r.id}, {"expected", r.expected}}));
      }
      write_lines(path_of("typos.jsonl"), data);
      write_lines(path_of("oracle.jsonl"), oracle);
      out.tables = {{"typos", path_of("typos.jsonl")}};
      out.oracle_path = path_of("oracle.jsonl");
      out.query = "SELECT id, prompt('fix: ' || word) AS fixed FROM typos";
      return out;
    }
    case TaskKind::fuzzyjoin: {
      const FuzzyJoinData data = generate_fuzzyjoin_data(spec.rows, spec.seed);
      std::vector<std::string> left, right, oracle;
      for (const auto& [lid, lname] : data.left)
        left.push_back(json_line({{"lid", lid}, {"lname", lname}}));
      for (const auto& [rid, rname] : data.right)
        right.push_back(json_line({{"rid", rid}, {"rname", rname}}));
      for (const auto& [lid, rid] : data.matches)
        oracle.push_back(json_line({{"lid", lid}, {"rid", rid}}));
      write_lines(path_of("lhs.jsonl"), left);
      write_lines(path_of("rhs.jsonl"), right);
      write_lines(path_of("oracle.jsonl"), oracle);
      out.tables = {{"lhs", path_of("lhs.jsonl")}, {"rhs", path_of("rhs.jsonl")}};
      out.oracle_path = path_of("oracle.jsonl");
      out.query = "SELECT lid, rid FROM lhs SEMANTIC JOIN rhs ON lname ~ rname";
      return out;
    }
  }
  throw ContractViolation("generate_workload: bad kind");
}

double join_decision_accuracy(const Table& left, const Table& right,
                              const std::string& left_col, const std::string& right_col,
                              const std::vector<std::pair<int, int>>& result_pairs,
                              const std::vector<std::pair<int, int>>& oracle_pairs) {
  const Column& lcol = left.column(left_col);
  const Column& rcol = right.column(right_col);
  const std::set<std::pair<int, int>> result(result_pairs.begin(), result_pairs.end());
  const std::set<std::pair<int, int>> oracle(oracle_pairs.begin(), oracle_pairs.end());
  uint64_t considered = 0, agreed = 0;
  for (size_t i = 0; i < left.row_count; ++i)
    for (size_t j = 0; j < right.row_count; ++j) {
      if (!blocking_pass(lcol.texts[i], rcol.texts[j])) continue;
      ++considered;
      const auto pair = std::make_pair(static_cast<int>(i), static_cast<int>(j));
      agreed += result.count(pair) == oracle.count(pair);
    }
  return considered == 0 ? 1.0 : static_cast<double>(agreed) / considered;
}

namespace {

struct OracleData {
  std::vector<std::string> expected;             // summarize / correct, by row
  std::vector<std::pair<int, int>> match_pairs;  // fuzzyjoin
};

OracleData load_oracle(TaskKind kind, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("bench: cannot open oracle " + path);
  OracleData oracle;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    if (kind == TaskKind::fuzzyjoin)
      oracle.match_pairs.emplace_back(j.at("lid").get<int>(), j.at("rid").get<int>());
    else
      oracle.expected.push_back(j.at("expected").get<std::string>());
  }
  return oracle;
}

double ground_truth_accuracy(TaskKind kind, const Table& result,
                             const std::map<std::string, Table>& tables,
                             const OracleData& oracle) {
  if (kind == TaskKind::fuzzyjoin) {
    std::vector<std::pair<int, int>> produced;
    const Column& lid = result.column("lid");
    const Column& rid = result.column("rid");
    for (size_t r = 0; r < result.row_count; ++r)
      produced.emplace_back(static_cast<int>(lid.ints[r]), static_cast<int>(rid.ints[r]));
    return join_decision_accuracy(tables.at("lhs"), tables.at("rhs"), "lname", "rname", produced,
                                  oracle.match_pairs);
  }
  const Column& out = result.columns.back();  // generated column is last in both queries
  if (result.row_count != oracle.expected.size())
    throw ContractViolation("bench: result row count differs from oracle");
  uint64_t hits = 0;
  for (size_t r = 0; r < result.row_count; ++r) hits += out.texts[r] == oracle.expected[r];
  return result.row_count == 0 ? 1.0 : static_cast<double>(hits) / result.row_count;
}

}  // namespace

RunReport run_benchmark(const WorkloadSpec& spec, const ModelBundle& model,
                        const std::vector<std::string>& profile_names, const std::string& workdir,
                        const ExecOptions& exec_options, uint64_t specialize_seed) {
  RunReport report;
  report.workload = task_name(spec.kind);
  report.rows = spec.rows;
  report.seed = spec.seed;

  const std::string data_dir = (std::filesystem::path(workdir) / "data" /
                                (std::string(task_name(spec.kind)) + "_" +
                                 std::to_string(spec.rows) + "_" + std::to_string(spec.seed)))
                                   .string();
  const GeneratedWorkload gen = generate_workload(spec, data_dir);
  const OracleData oracle = load_oracle(spec.kind, gen.oracle_path);

  std::map<std::string, Table> tables;
  for (const auto& [name, path] : gen.tables) tables[name] = ingest(path, name);

  const QueryPlan plan = parse_query(gen.query);
  ModelRegistry registry((std::filesystem::path(workdir) / "bundles").string());

  // baseline always runs first: the accuracy normalizer needs it.
  std::vector<std::string> order{"baseline"};
  for (const auto& p : profile_names)
    if (p != "baseline") order.push_back(p);

  const uint64_t rows_processed =
      spec.kind == TaskKind::fuzzyjoin ? tables.at("lhs").row_count : tables.begin()->second.row_count;

  double baseline_accuracy = 0.0;
  for (const auto& name : order) {
    ProfileReport pr;
    pr.profile = name;
    const OptimizationProfile profile = OptimizationProfile::by_name(name);

    Rng rng(specialize_seed);
    FlopCounter spec_counter;
    SpecializeResult sp = specialize(model, tables, plan, profile, &registry, rng,
                                     exec_options.max_new_tokens, spec_counter);
    pr.profile_used = sp.profile_used;
    pr.validation_score = sp.validation_score;
    pr.specialize_seconds = sp.specialize_seconds;
    pr.model_file_bytes = serialize_bundle(sp.bundle).size();
    pr.weight_payload_bytes = estimate_size(sp.bundle);

    const ModelRuntime runtime(sp.bundle);
    PromptCache cache(exec_options.cache_capacity);
    ExecStats stats;
    FlopCounter exec_counter;
    const auto t0 = std::chrono::steady_clock::now();
    const Table result =
        execute(plan, tables, runtime, cache, exec_options, stats, exec_counter);
    pr.execute_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    pr.rows_processed = rows_processed;
    pr.output_rows = result.row_count;
    pr.rows_per_second =
        pr.execute_seconds > 0 ? static_cast<double>(rows_processed) / pr.execute_seconds : 0.0;
    pr.decode_flops = exec_counter.total();
    pr.flops_per_row =
        rows_processed > 0 ? static_cast<double>(pr.decode_flops) / rows_processed : 0.0;
    pr.invocations = stats.model_invocations;
    pr.cache_hits = stats.cache_hits;
    pr.cache_misses = stats.cache_misses;
    pr.gt_accuracy = ground_truth_accuracy(spec.kind, result, tables, oracle);

    if (name == "baseline") {
      baseline_accuracy = pr.gt_accuracy;
      pr.normalized_accuracy = 1.0;  // by construction
    } else {
      pr.normalized_accuracy = baseline_accuracy > 0 ? pr.gt_accuracy / baseline_accuracy : 0.0;
    }
    report.profiles.push_back(std::move(pr));
  }
  return report;
}

nlohmann::ordered_json RunReport::to_json(bool include_timing) const {
  nlohmann::ordered_json j;
  j["workload"] = workload;
  j["rows"] = rows;
  j["seed"] = seed;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& p : profiles) {
    nlohmann::ordered_json pj;
    pj["profile"] = p.profile;
    pj["profile_used"] = p.profile_used;
    pj["model_file_bytes"] = p.model_file_bytes;
    pj["weight_payload_bytes"] = p.weight_payload_bytes;
    pj["decode_flops"] = p.decode_flops;
    pj["flops_per_row"] = p.flops_per_row;
    pj["validation_score"] = p.validation_score;
    pj["gt_accuracy"] = p.gt_accuracy;
    pj["normalized_accuracy"] = p.normalized_accuracy;
    pj["rows_processed"] = p.rows_processed;
    pj["output_rows"] = p.output_rows;
    pj["invocations"] = p.invocations;
    pj["cache_hits"] = p.cache_hits;
    pj["cache_misses"] = p.cache_misses;
    if (include_timing) {
      pj["rows_per_second"] = p.rows_per_second;
      pj["execute_seconds"] = p.execute_seconds;
      pj["specialize_seconds"] = p.specialize_seconds;
    }
    arr.push_back(std::move(pj));
  }
  j["profiles"] = std::move(arr);
  return j;
}

std::string RunReport::to_text() const {
  std::ostringstream out;
  out << "Workload: " << workload << " (" << rows << " rows, seed " << seed << ")\n";
  out << "| Model     | Model Size | Accuracy Score | Throughput |\n";
  out << "|-----------|------------|----------------|------------|\n";
  char line[160];
  for (const auto& p : profiles) {
    std::snprintf(line, sizeof line, "| %-9s | %7.2f KB | %14.3f | %6.2f r/s |\n",
                  p.profile.c_str(), p.model_file_bytes / 1024.0, p.normalized_accuracy,
                  p.rows_per_second);
    out << line;
  }
  return out.str();
}

}  // namespace iolm
