// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "iolm/bench.hpp"
#include "iolm/common.hpp"
#include "iolm/train.hpp"

using namespace iolm;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fresh_dir(const std::string& tag) {
  const auto dir = std::filesystem::temp_directory_path() / ("iolm_bench_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

ModelBundle stub_bundle() {
  Rng rng(55);
  return ToyModelParams::init(ModelConfig::dense(32, 2, 2, 64, 128), rng).to_bundle();
}

}  // namespace

TEST_CASE("lexicons hold their structural invariants") {
  std::set<std::string> seen;
  for (const auto& w : review_lexicon()) {
    CHECK(w.size() == 6);
    CHECK(seen.insert(w).second);
    for (char c : w) CHECK((c >= 'a' && c <= 'z'));
  }
  CHECK(review_lexicon().size() >= 64);

  const auto& typos = typo_lexicon();
  CHECK(typos.size() == 512);
  for (const auto& w : typos) CHECK(w.size() == 6);
  // Spot-check the pairwise distance floor on a sample.
  auto hamming = [](const std::string& a, const std::string& b) {
    int d = 0;
    for (size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
    return d;
  };
  for (size_t i = 0; i < typos.size(); i += 17)
    for (size_t j = i + 1; j < typos.size(); j += 13) CHECK(hamming(typos[i], typos[j]) >= 3);

  for (const auto& [abbrev, full] : abbreviation_table()) {
    CHECK(abbrev[0] == full[0]);  // blocking leans on this
    CHECK(abbrev.size() < full.size());
  }
}

TEST_CASE("generated datasets are byte-identical for a fixed seed") {
  for (const char* workload : {"summarize", "correct", "fuzzyjoin"}) {
    const WorkloadSpec spec{task_from_name(workload), 40, 7};
    const std::string d1 = fresh_dir(std::string(workload) + "_a");
    const std::string d2 = fresh_dir(std::string(workload) + "_b");
    const GeneratedWorkload g1 = generate_workload(spec, d1);
    const GeneratedWorkload g2 = generate_workload(spec, d2);
    for (size_t i = 0; i < g1.tables.size(); ++i)
      CHECK(slurp(g1.tables[i].second) == slurp(g2.tables[i].second));
    CHECK(slurp(g1.oracle_path) == slurp(g2.oracle_path));
    std::filesystem::remove_all(d1);
    std::filesystem::remove_all(d2);
  }
}

TEST_CASE("different seeds give different datasets") {
  const std::string d1 = fresh_dir("seed_a");
  const std::string d2 = fresh_dir("seed_b");
  const GeneratedWorkload g1 = generate_workload({TaskKind::summarize, 40, 1}, d1);
  const GeneratedWorkload g2 = generate_workload({TaskKind::summarize, 40, 2}, d2);
  CHECK(slurp(g1.tables[0].second) != slurp(g2.tables[0].second));
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}

TEST_CASE("every corrupted word differs from its target in exactly one position") {
  const auto rows = generate_correct_rows(300, 3);
  for (const auto& r : rows) {
    REQUIRE(r.word.size() == r.expected.size());
    int diff = 0;
    for (size_t i = 0; i < r.word.size(); ++i) diff += r.word[i] != r.expected[i];
    CHECK(diff == 1);
  }
}

TEST_CASE("summarize targets are the first five words") {
  const auto rows = generate_summarize_rows(50, 4);
  for (const auto& r : rows) {
    CHECK(r.expected == summarize_target(r.review));
    std::istringstream in(r.expected);
    std::string w;
    int count = 0;
    while (in >> w) ++count;
    CHECK(count == 5);
  }
}

TEST_CASE("fuzzyjoin oracle matches are normalization-symmetric") {
  const FuzzyJoinData data = generate_fuzzyjoin_data(60, 5);
  for (const auto& [lid, rid] : data.matches) {
    const std::string& a = data.left[lid].second;
    const std::string& b = data.right[rid].second;
    CHECK(normalize_entity(a) == normalize_entity(b));
    CHECK(normalize_entity(b) == normalize_entity(a));
  }
  CHECK(!data.matches.empty());
}

TEST_CASE("join decision accuracy is 1 when the result equals the oracle") {
  const FuzzyJoinData data = generate_fuzzyjoin_data(20, 6);
  Table left, right;
  left.name = "lhs";
  right.name = "rhs";
  Column ln{.name = "lname", .type = ColumnType::text, .texts = {}};
  Column rn{.name = "rname", .type = ColumnType::text, .texts = {}};
  for (const auto& [_, name] : data.left) ln.texts.push_back(name);
  for (const auto& [_, name] : data.right) rn.texts.push_back(name);
  left.columns.push_back(ln);
  left.row_count = ln.texts.size();
  right.columns.push_back(rn);
  right.row_count = rn.texts.size();
  CHECK(join_decision_accuracy(left, right, "lname", "rname", data.matches, data.matches) == 1.0);
  // Dropping every match costs exactly the matched share of blocked pairs.
  const double none = join_decision_accuracy(left, right, "lname", "rname", {}, data.matches);
  CHECK(none < 1.0);
}

TEST_CASE("benchmark report is consistent and deterministic apart from timing") {
  const ModelBundle model = stub_bundle();
  const WorkloadSpec spec{TaskKind::correct, 12, 11};
  ExecOptions opts;
  opts.max_new_tokens = 8;

  const std::string w1 = fresh_dir("run_a");
  const RunReport r1 = run_benchmark(spec, model, {"baseline"}, w1, opts);
  REQUIRE(r1.profiles.size() == 1);
  const ProfileReport& p = r1.profiles[0];
  CHECK(p.profile == "baseline");
  CHECK(p.normalized_accuracy == 1.0);
  CHECK(p.model_file_bytes == serialize_bundle(model).size());
  CHECK(p.rows_processed == 12);
  CHECK(p.decode_flops > 0);
  CHECK(p.rows_per_second > 0.0);
  CHECK(p.flops_per_row == doctest::Approx(static_cast<double>(p.decode_flops) / 12.0));

  const std::string w2 = fresh_dir("run_b");
  const RunReport r2 = run_benchmark(spec, model, {"baseline"}, w2, opts);
  CHECK(r1.to_json(false) == r2.to_json(false));

  const std::string text = r1.to_text();
  CHECK(text.find("Model Size") != std::string::npos);
  CHECK(text.find("Accuracy Score") != std::string::npos);
  CHECK(text.find("Throughput") != std::string::npos);
  std::filesystem::remove_all(w1);
  std::filesystem::remove_all(w2);
}

TEST_CASE("benchmark runs a join workload end to end with the stub model") {
  const ModelBundle model = stub_bundle();
  const WorkloadSpec spec{TaskKind::fuzzyjoin, 8, 13};
  ExecOptions opts;
  const std::string dir = fresh_dir("join_run");
  const RunReport report = run_benchmark(spec, model, {"baseline"}, dir, opts);
  REQUIRE(report.profiles.size() == 1);
  CHECK(report.profiles[0].rows_processed == 8);
  // Untrained model: accuracy is whatever it is, but must be a valid rate.
  CHECK(report.profiles[0].gt_accuracy >= 0.0);
  CHECK(report.profiles[0].gt_accuracy <= 1.0);
  std::filesystem::remove_all(dir);
}
