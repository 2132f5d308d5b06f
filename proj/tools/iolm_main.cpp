// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0
//
// iolm: train the toy model, generate workloads, compress bundles, run
// queries with per-row prompt operators, and benchmark profiles.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "iolm/bench.hpp"
#include "iolm/calib.hpp"
#include "iolm/common.hpp"
#include "iolm/compress.hpp"
#include "iolm/exec.hpp"
#include "iolm/optimize.hpp"
#include "iolm/train.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitParse = 3;
constexpr int kExitRuntime = 4;

iolm::ModelConfig config_from_file(const std::string& path) {
  if (path.empty()) return iolm::ModelConfig::reference();
  std::ifstream in(path);
  if (!in) throw iolm::Error("cannot open config " + path);
  nlohmann::json j;
  in >> j;
  iolm::ModelConfig cfg = iolm::ModelConfig::dense(
      j.at("d_model").get<int>(), j.at("n_layers").get<int>(), j.at("n_heads").get<int>(),
      j.at("d_ff").get<int>(), j.at("max_seq_len").get<int>());
  return cfg;
}

std::string read_sql_arg(const std::string& arg) {
  if (!arg.empty() && arg[0] == '@') {
    std::ifstream in(arg.substr(1));
    if (!in) throw iolm::Error("cannot open sql file " + arg.substr(1));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
  return arg;
}

int cmd_train_toy(const std::string& config_path, int steps, uint64_t seed, int batch,
                  const std::string& out_path) {
  const iolm::ModelConfig cfg = config_from_file(config_path);
  iolm::Rng rng(seed);
  iolm::TrainOptions opts;
  opts.batch_size = batch;
  opts.progress = [](int step, double loss) {
    std::fprintf(stderr, "step %6d  loss %.4f\n", step, loss);
  };
  iolm::TrainLog log;
  const iolm::ModelBundle bundle =
      iolm::train_toy(cfg, {iolm::TaskKind::summarize, iolm::TaskKind::correct,
                            iolm::TaskKind::fuzzyjoin},
                      steps, rng, opts, &log);
  iolm::save_bundle(bundle, out_path);
  std::fprintf(stderr, "saved %s (hash %s)\n", out_path.c_str(), bundle.hash_hex().c_str());

  // Held-out task accuracies for the curve log.
  const iolm::ModelRuntime rt(bundle);
  iolm::Rng eval_rng(seed + 1);
  for (const auto kind :
       {iolm::TaskKind::summarize, iolm::TaskKind::correct, iolm::TaskKind::fuzzyjoin}) {
    const double acc = iolm::exact_match_rate(rt, kind, 64, eval_rng);
    std::fprintf(stderr, "heldout %-10s exact-match %.3f\n", iolm::task_name(kind), acc);
  }
  return kExitOk;
}

int cmd_gen(const std::string& workload, int rows, uint64_t seed, const std::string& out_dir) {
  iolm::WorkloadSpec spec{iolm::task_from_name(workload), rows, seed};
  const iolm::GeneratedWorkload gen = iolm::generate_workload(spec, out_dir);
  for (const auto& [name, path] : gen.tables)
    std::printf("table %s: %s\n", name.c_str(), path.c_str());
  std::printf("oracle: %s\nquery: %s\n", gen.oracle_path.c_str(), gen.query.c_str());
  return kExitOk;
}

int cmd_compress(const std::string& model_path, const std::string& recipe_path,
                 const std::string& calib_path, const std::string& out_path) {
  const iolm::ModelBundle bundle = iolm::load_bundle(model_path);
  const iolm::CompressionRecipe recipe = iolm::CompressionRecipe::from_file(recipe_path);

  std::vector<std::string> prompts;
  std::ifstream in(calib_path);
  if (!in) throw iolm::Error("cannot open calibration prompts " + calib_path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      prompts.push_back(nlohmann::json::parse(line).at("prompt").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw iolm::Error("calibration line " + std::to_string(line_no) + ": " + e.what());
    }
  }

  const iolm::ModelRuntime rt(bundle);
  iolm::Rng rng(recipe.calibration_k);
  const iolm::CalibrationSet calib =
      iolm::capture_calibration(rt, prompts, recipe.calibration_k, rng);
  std::vector<std::string> events;
  const iolm::ModelBundle out = iolm::apply_recipe(bundle, recipe, calib, &events);
  for (const auto& e : events) std::fprintf(stderr, "note: %s\n", e.c_str());
  iolm::save_bundle(out, out_path);
  std::fprintf(stderr, "saved %s: %llu -> %llu payload bytes\n", out_path.c_str(),
               static_cast<unsigned long long>(iolm::estimate_size(bundle)),
               static_cast<unsigned long long>(iolm::estimate_size(out)));
  return kExitOk;
}

int cmd_query(const std::string& sql_arg, const std::vector<std::string>& table_args,
              const std::string& model_path, const std::string& profile, int batch,
              size_t cache_capacity, int max_new_tokens, bool plan_dump,
              const std::string& report_path, const std::string& out_path,
              const std::string& workdir) {
  const iolm::QueryPlan plan = iolm::parse_query(read_sql_arg(sql_arg));
  if (plan_dump) std::cout << iolm::plan_to_json(plan).dump(2) << "\n";

  std::map<std::string, iolm::Table> tables;
  for (const auto& arg : table_args) {
    const auto eq = arg.find('=');
    if (eq == std::string::npos)
      throw iolm::ContractViolation("--table expects name=path, got '" + arg + "'");
    const std::string name = arg.substr(0, eq);
    tables[name] = iolm::ingest(arg.substr(eq + 1), name);
  }

  const iolm::ModelBundle baseline = iolm::load_bundle(model_path);
  iolm::ModelRegistry registry((std::filesystem::path(workdir) / "bundles").string());
  iolm::Rng rng(0x5EED);
  iolm::FlopCounter spec_counter;
  const iolm::SpecializeResult sp =
      iolm::specialize(baseline, tables, plan, iolm::OptimizationProfile::by_name(profile),
                       &registry, rng, max_new_tokens, spec_counter);
  std::fprintf(stderr, "profile %s -> using %s (validation %.3f%s)\n", profile.c_str(),
               sp.profile_used.c_str(), sp.validation_score,
               sp.from_registry ? ", registry hit" : "");

  const iolm::ModelRuntime runtime(sp.bundle);
  iolm::PromptCache cache(cache_capacity);
  iolm::ExecOptions opts;
  opts.batch_size = batch;
  opts.cache_capacity = cache_capacity;
  opts.max_new_tokens = max_new_tokens;
  iolm::ExecStats stats;
  iolm::FlopCounter counter;
  const iolm::Table result =
      iolm::execute(plan, tables, runtime, cache, opts, stats, counter);

  if (out_path.empty())
    std::cout << iolm::table_to_csv(result);
  else
    iolm::write_csv(result, out_path);

  if (!report_path.empty()) {
    nlohmann::ordered_json j;
    j["profile"] = profile;
    j["profile_used"] = sp.profile_used;
    j["validation_score"] = sp.validation_score;
    j["specialize_seconds"] = sp.specialize_seconds;
    j["model_file_bytes"] = iolm::serialize_bundle(sp.bundle).size();
    j["weight_payload_bytes"] = iolm::estimate_size(sp.bundle);
    j["rows_out"] = result.row_count;
    j["decode_flops"] = counter.total();
    j["model_invocations"] = stats.model_invocations;
    j["cache_hits"] = stats.cache_hits;
    j["cache_misses"] = stats.cache_misses;
    j["unparsable_match_answers"] = stats.unparsable_match_answers;
    std::ofstream out(report_path, std::ios::trunc);
    out << j.dump(2) << "\n";
  }
  return kExitOk;
}

int cmd_bench(const std::string& workload, int rows, uint64_t seed,
              const std::string& model_path, std::vector<std::string> profiles, int batch,
              size_t cache_capacity, int max_new_tokens, const std::string& report_path,
              const std::string& workdir) {
  const iolm::ModelBundle model = iolm::load_bundle(model_path);
  if (profiles.empty()) profiles = {"baseline", "acc", "perf"};
  iolm::WorkloadSpec spec{iolm::task_from_name(workload), rows, seed};
  iolm::ExecOptions opts;
  opts.batch_size = batch;
  opts.cache_capacity = cache_capacity;
  opts.max_new_tokens = max_new_tokens;
  const iolm::RunReport report = iolm::run_benchmark(spec, model, profiles, workdir, opts);
  std::cout << report.to_text();
  if (!report_path.empty()) {
    std::ofstream out(report_path, std::ios::trunc);
    out << report.to_json().dump(2) << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"iolm: query-specialized toy LLM analytics engine"};
  app.require_subcommand(1);

  // train-toy
  auto* train = app.add_subcommand("train-toy", "train the reference toy model on the task mix");
  std::string train_config, train_out = "model.iolm";
  int train_steps = 1400, train_batch = 12;
  uint64_t train_seed = 42;
  train->add_option("--config", train_config, "model config JSON (default: reference config)");
  train->add_option("--steps", train_steps, "Adam steps");
  train->add_option("--seed", train_seed, "rng seed");
  train->add_option("--batch", train_batch, "batch size");
  train->add_option("--out", train_out, "output bundle path")->required();

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic workload dataset + oracle");
  std::string gen_workload, gen_out;
  int gen_rows = 500;
  uint64_t gen_seed = 0;
  gen->add_option("--workload", gen_workload, "summarize|correct|fuzzyjoin")->required();
  gen->add_option("--rows", gen_rows, "row count");
  gen->add_option("--seed", gen_seed, "dataset seed");
  gen->add_option("--out", gen_out, "output directory")->required();

  // compress
  auto* compress = app.add_subcommand("compress", "apply a compression recipe to a bundle");
  std::string cmp_model, cmp_recipe, cmp_calib, cmp_out;
  compress->add_option("--model", cmp_model, "input bundle")->required();
  compress->add_option("--recipe", cmp_recipe, "recipe JSON file")->required();
  compress->add_option("--calib", cmp_calib, "calibration prompts JSONL ({\"prompt\": ...})")
      ->required();
  compress->add_option("--out", cmp_out, "output bundle")->required();

  // query
  auto* query = app.add_subcommand("query", "run a SQL query with prompt operators");
  std::string q_sql, q_model, q_profile = "baseline", q_report, q_out, q_workdir = "iolm_work";
  std::vector<std::string> q_tables;
  int q_batch = 16, q_max_new = 48;
  size_t q_cache = 65536;
  bool q_plan_dump = false;
  query->add_option("--sql", q_sql, "query text, or @file")->required();
  query->add_option("--table", q_tables, "name=path (repeatable; .csv or .jsonl)");
  query->add_option("--model", q_model, "baseline model bundle")->required();
  query->add_option("--profile", q_profile, "baseline|acc|perf");
  query->add_option("--batch", q_batch, "decode batch size");
  query->add_option("--cache-capacity", q_cache, "prompt cache entries (0 disables)");
  query->add_option("--max-new-tokens", q_max_new, "per-row decode budget");
  query->add_flag("--plan-dump", q_plan_dump, "print the logical plan JSON");
  query->add_option("--report", q_report, "write run report JSON here");
  query->add_option("--out", q_out, "write result CSV here (default: stdout)");
  query->add_option("--workdir", q_workdir, "registry/bundle directory");

  // bench
  auto* bench = app.add_subcommand("bench", "run a workload end-to-end and report metrics");
  std::string b_workload, b_model, b_report, b_workdir = "iolm_work";
  std::vector<std::string> b_profiles;
  int b_rows = 500, b_batch = 16, b_max_new = 48;
  uint64_t b_seed = 0;
  size_t b_cache = 65536;
  bench->add_option("--workload", b_workload, "summarize|correct|fuzzyjoin")->required();
  bench->add_option("--rows", b_rows, "row count");
  bench->add_option("--seed", b_seed, "dataset seed");
  bench->add_option("--model", b_model, "baseline model bundle")->required();
  bench->add_option("--profile", b_profiles, "profiles to run (default: baseline acc perf)");
  bench->add_option("--batch", b_batch, "decode batch size");
  bench->add_option("--cache-capacity", b_cache, "prompt cache entries");
  bench->add_option("--max-new-tokens", b_max_new, "per-row decode budget");
  bench->add_option("--report", b_report, "write report JSON here");
  bench->add_option("--workdir", b_workdir, "registry/bundle directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train->parsed())
      return cmd_train_toy(train_config, train_steps, train_seed, train_batch, train_out);
    if (gen->parsed()) return cmd_gen(gen_workload, gen_rows, gen_seed, gen_out);
    if (compress->parsed()) return cmd_compress(cmp_model, cmp_recipe, cmp_calib, cmp_out);
    if (query->parsed())
      return cmd_query(q_sql, q_tables, q_model, q_profile, q_batch, q_cache, q_max_new,
                       q_plan_dump, q_report, q_out, q_workdir);
    if (bench->parsed())
      return cmd_bench(b_workload, b_rows, b_seed, b_model, b_profiles, b_batch, b_cache,
                       b_max_new, b_report, b_workdir);
  } catch (const iolm::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitParse;
  } catch (const iolm::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
