// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#include "iolm/optimize.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "iolm/calib.hpp"
#include "iolm/common.hpp"

namespace iolm {

OptimizationProfile OptimizationProfile::baseline() {
  OptimizationProfile p;
  p.name = "baseline";
  p.recipe.validation_tau = 0.0;
  return p;
}

OptimizationProfile OptimizationProfile::acc() {
  OptimizationProfile p;
  p.name = "acc";
  p.recipe.quantize =
      CompressionRecipe::QuantizeStep{8, CompressionRecipe::QuantizeStep::Method::gptq};
  p.recipe.calibration_k = 128;
  p.recipe.validation_tau = 0.95;
  p.recipe.holdout_m = 64;
  return p;
}

OptimizationProfile OptimizationProfile::perf() {
  OptimizationProfile p;
  p.name = "perf";
  p.recipe.prune = CompressionRecipe::PruneStep{0.5, 0.5};
  p.recipe.sparsify = CompressionRecipe::SparsifyStep{SparsePattern::two_of_four, 0.0,
                                                      SparsifyMethod::compensated};
  p.recipe.quantize =
      CompressionRecipe::QuantizeStep{8, CompressionRecipe::QuantizeStep::Method::gptq};
  p.recipe.calibration_k = 128;
  p.recipe.validation_tau = 0.85;
  p.recipe.holdout_m = 64;
  return p;
}

OptimizationProfile OptimizationProfile::by_name(const std::string& name) {
  if (name == "baseline") return baseline();
  if (name == "acc") return acc();
  if (name == "perf") return perf();
  throw ContractViolation("unknown profile '" + name + "' (expected baseline|acc|perf)");
}

uint64_t OptimizationProfile::key_hash() const {
  uint64_t h = fnv1a64(name);
  h = fnv1a64(recipe.id(), h);
  h = fnv1a64(std::to_string(recipe.calibration_k), h);
  h = fnv1a64(std::to_string(recipe.validation_tau), h);
  h = fnv1a64(std::to_string(recipe.holdout_m), h);
  h = fnv1a64(std::to_string(recipe.lambda_rel), h);
  return h;
}

uint64_t table_fingerprint(const Table& table, uint64_t seed) {
  uint64_t h = fnv1a64("table");
  for (const auto& col : table.columns) {
    h = fnv1a64(col.name, h);
    h = fnv1a64(column_type_name(col.type), h);
  }
  h = fnv1a64(std::to_string(table.row_count), h);

  // Seeded reservoir of up to 256 row indices, hashed in index order.
  constexpr size_t kSample = 256;
  std::vector<size_t> picked;
  Rng rng(seed);
  for (size_t r = 0; r < table.row_count; ++r) {
    if (picked.size() < kSample) {
      picked.push_back(r);
    } else {
      const uint64_t j = rng.next_below(r + 1);
      if (j < kSample) picked[j] = r;
    }
  }
  std::sort(picked.begin(), picked.end());
  for (size_t r : picked) {
    for (const auto& col : table.columns) {
      h = fnv1a64(table.value_as_text(col, r), h);
      h = fnv1a64("\x1f", h);
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

ModelRegistry::ModelRegistry(const std::string& directory) : dir_(directory) {
  std::filesystem::create_directories(dir_);
  load_index();
}

void ModelRegistry::load_index() {
  const auto path = std::filesystem::path(dir_) / "registry.json";
  std::ifstream in(path);
  if (!in) return;
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception&) {
    return;  // unreadable index is treated as empty
  }
  if (!j.contains("entries") || !j["entries"].is_object()) return;
  for (const auto& [key, entry] : j["entries"].items()) {
    if (entry.contains("path") && entry.contains("hash"))
      index_[key] = {entry["path"].get<std::string>(), entry["hash"].get<std::string>(),
                     entry.value("score", 1.0)};
  }
}

void ModelRegistry::save_index() const {
  nlohmann::ordered_json entries;
  for (const auto& [key, entry] : index_)
    entries[key] = {{"path", entry.path}, {"hash", entry.hash}, {"score", entry.score}};
  nlohmann::ordered_json j;
  j["entries"] = std::move(entries);

  const auto path = std::filesystem::path(dir_) / "registry.json";
  const auto tmp = std::filesystem::path(dir_) / "registry.json.tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("registry: cannot write " + tmp.string());
    out << j.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, path);
}

std::optional<ModelRegistry::Hit> ModelRegistry::lookup(uint64_t key) const {
  auto it = index_.find(to_hex(key));
  if (it == index_.end()) return std::nullopt;
  const Entry& entry = it->second;
  if (!std::filesystem::exists(entry.path)) return std::nullopt;
  try {
    ModelBundle bundle = load_bundle(entry.path);
    if (bundle.hash_hex() != entry.hash) return std::nullopt;  // stale or corrupt
    return Hit{std::move(bundle), entry.score};
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::string ModelRegistry::store(uint64_t key, const ModelBundle& bundle, double score) {
  const std::string hex = to_hex(key);
  const auto path = (std::filesystem::path(dir_) / (hex + ".iolm")).string();
  save_bundle(bundle, path);
  index_[hex] = {path, bundle.hash_hex(), score};
  save_index();
  return path;
}

// ---------------------------------------------------------------------------
// Prompt streams and sampling
// ---------------------------------------------------------------------------

namespace {

struct StreamSource {
  const PlanNode* prompt_op = nullptr;     // innermost prompt op, if any
  const PlanNode* join = nullptr;          // semantic join, if any
  const PlanNode* filter = nullptr;        // filter between them and the scan
  const PlanNode* scan = nullptr;
  const PlanNode* right_scan = nullptr;
};

StreamSource find_stream_source(const QueryPlan& plan) {
  StreamSource s;
  const PlanNode* n = plan.root.get();
  while (n) {
    switch (n->kind) {
      case PlanNode::Kind::project:
        n = n->children.at(0).get();
        break;
      case PlanNode::Kind::prompt_op:
        s.prompt_op = n;  // keep walking; the innermost one wins
        n = n->children.at(0).get();
        break;
      case PlanNode::Kind::filter:
        s.filter = n;
        n = n->children.at(0).get();
        break;
      case PlanNode::Kind::semantic_join:
        s.join = n;
        s.scan = n->children.at(0).get();
        s.right_scan = n->children.at(1).get();
        n = nullptr;
        break;
      case PlanNode::Kind::scan:
        s.scan = n;
        n = nullptr;
        break;
    }
  }
  return s;
}

const Table& table_for_scan(const PlanNode& scan, const std::map<std::string, Table>& tables) {
  auto it = tables.find(scan.table);
  if (it == tables.end()) throw ContractViolation("unknown table '" + scan.table + "'");
  return it->second;
}

std::string render_stream_template(const Expr& e, const Table& t, size_t row) {
  switch (e.kind) {
    case Expr::Kind::string_lit: return e.text;
    case Expr::Kind::int_lit: return std::to_string(e.int_value);
    case Expr::Kind::float_lit: return render_double(e.float_value);
    case Expr::Kind::column: return t.value_as_text(t.column(e.text), row);
    case Expr::Kind::concat: {
      std::string out;
      for (const auto& part : e.parts) out += render_stream_template(part, t, row);
      return out;
    }
    case Expr::Kind::prompt: break;
  }
  throw ContractViolation("prompt template: unsupported expression");
}

}  // namespace

std::vector<std::string> collect_prompt_stream(const QueryPlan& plan,
                                               const std::map<std::string, Table>& tables) {
  const StreamSource src = find_stream_source(plan);
  std::vector<std::string> stream;

  if (src.join) {
    // The join is the first model-touching operator: its candidate-pair
    // match prompts are what the model will see.
    const Table& left = table_for_scan(*src.scan, tables);
    const Table& right = table_for_scan(*src.right_scan, tables);
    const Column& lcol = left.column(src.join->left_column);
    const Column& rcol = right.column(src.join->right_column);
    if (lcol.type != ColumnType::text || rcol.type != ColumnType::text)
      throw ContractViolation("semantic join columns must be text");
    for (size_t i = 0; i < left.row_count; ++i)
      for (size_t j = 0; j < right.row_count; ++j)
        if (blocking_pass(lcol.texts[i], rcol.texts[j]))
          stream.push_back(semantic_match_prompt(lcol.texts[i], rcol.texts[j]));
    return stream;
  }

  if (src.prompt_op) {
    Table input = table_for_scan(*src.scan, tables);
    if (src.filter) input = filter_rows(input, src.filter->predicate);
    stream.reserve(input.row_count);
    for (size_t r = 0; r < input.row_count; ++r)
      stream.push_back(render_stream_template(src.prompt_op->prompt_template, input, r));
  }
  return stream;
}

uint64_t plan_template_hash(const QueryPlan& plan) {
  const StreamSource src = find_stream_source(plan);
  uint64_t h = fnv1a64("template");
  if (src.join)
    h = fnv1a64("semantic_join:" + semantic_match_prompt("<a>", "<b>"), h);
  else if (src.prompt_op)
    h = fnv1a64(expr_canonical(src.prompt_op->prompt_template), h);
  return h;
}

std::vector<std::string> sample_prompts(const std::vector<std::string>& stream, int k, Rng& rng) {
  if (stream.empty()) throw EmptyCalibration("sample_prompts: empty prompt stream");
  if (k < 1) throw ContractViolation("sample_prompts: k must be >= 1");
  if (k >= static_cast<int>(stream.size())) return stream;

  std::vector<size_t> picked(k);
  for (int i = 0; i < k; ++i) picked[i] = i;
  for (size_t i = k; i < stream.size(); ++i) {
    const uint64_t j = rng.next_below(i + 1);
    if (j < static_cast<uint64_t>(k)) picked[j] = i;
  }
  std::sort(picked.begin(), picked.end());
  std::vector<std::string> out;
  out.reserve(k);
  for (size_t idx : picked) out.push_back(stream[idx]);
  return out;
}

std::vector<std::string> sample_calibration_rows(const Table& table, const QueryPlan& plan,
                                                 int k, Rng& rng) {
  if (table.row_count == 0) throw EmptyCalibration("sample_calibration_rows: empty table");
  std::map<std::string, Table> tables;
  const StreamSource src = find_stream_source(plan);
  if (src.scan) tables[src.scan->table] = table;
  if (src.right_scan) tables[src.right_scan->table] = table;
  return sample_prompts(collect_prompt_stream(plan, tables), k, rng);
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

double token_f1(const std::string& candidate, const std::string& baseline) {
  auto tokens = [](const std::string& s) {
    std::map<std::string, int> counts;
    std::istringstream in(s);
    std::string tok;
    int total = 0;
    while (in >> tok) {
      ++counts[tok];
      ++total;
    }
    return std::make_pair(counts, total);
  };
  const auto [cand_counts, cand_total] = tokens(candidate);
  const auto [base_counts, base_total] = tokens(baseline);
  if (cand_total == 0 && base_total == 0) return 1.0;
  if (cand_total == 0 || base_total == 0) return 0.0;
  int overlap = 0;
  for (const auto& [tok, n] : cand_counts) {
    auto it = base_counts.find(tok);
    if (it != base_counts.end()) overlap += std::min(n, it->second);
  }
  if (overlap == 0) return 0.0;
  const double precision = static_cast<double>(overlap) / cand_total;
  const double recall = static_cast<double>(overlap) / base_total;
  return 2.0 * precision * recall / (precision + recall);
}

ValidationReport validate(const ModelRuntime& candidate, const ModelRuntime& baseline,
                          const std::vector<std::string>& holdout, double tau,
                          int max_new_tokens, FlopCounter& counter) {
  if (holdout.empty()) throw ContractViolation("validate: empty holdout");
  const auto cand_out = candidate.batch_decode(holdout, max_new_tokens, counter);
  const auto base_out = baseline.batch_decode(holdout, max_new_tokens, counter);
  ValidationReport report;
  report.per_row.reserve(holdout.size());
  int exact = 0;
  double total = 0.0;
  for (size_t i = 0; i < holdout.size(); ++i) {
    const double f1 = token_f1(cand_out[i], base_out[i]);
    report.per_row.push_back(f1);
    total += f1;
    exact += cand_out[i] == base_out[i];
  }
  report.score = total / static_cast<double>(holdout.size());
  report.exact_match = static_cast<double>(exact) / static_cast<double>(holdout.size());
  report.pass = report.score >= tau;
  return report;
}

// ---------------------------------------------------------------------------
// Specialization workflow
// ---------------------------------------------------------------------------

SpecializeResult specialize(const ModelBundle& baseline, const std::map<std::string, Table>& tables,
                            const QueryPlan& plan, const OptimizationProfile& profile,
                            ModelRegistry* registry, Rng& rng, int max_new_tokens,
                            FlopCounter& counter) {
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&t0] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  SpecializeResult result;
  result.bundle = baseline;
  result.profile_used = "baseline";

  if (profile.name == "baseline") {
    result.specialize_seconds = elapsed();
    return result;
  }

  uint64_t fingerprint = fnv1a64("tables");
  for (const auto& [name, table] : tables) {
    fingerprint = fnv1a64(name, fingerprint);
    const uint64_t fp = table_fingerprint(table);
    fingerprint = fnv1a64_bytes(&fp, sizeof fp, fingerprint);
  }

  // Fallback chain: requested profile, then acc (when coming from perf),
  // then the baseline, which always succeeds.
  std::vector<OptimizationProfile> chain{profile};
  if (profile.name == "perf") chain.push_back(OptimizationProfile::acc());

  // All sampling substreams derive from one base draw, so a fallback
  // attempt samples exactly what a direct call with that profile would.
  const uint64_t rng_base = rng.next_u64();

  const ModelRuntime baseline_rt(baseline);
  std::vector<std::string> stream;
  bool stream_ready = false;

  for (const auto& prof : chain) {
    const uint64_t template_hash = plan_template_hash(plan);
    uint64_t key = fnv1a64("specialized");
    key = fnv1a64_bytes(&template_hash, sizeof template_hash, key);
    key = fnv1a64_bytes(&fingerprint, sizeof fingerprint, key);
    const uint64_t profile_hash = prof.key_hash();
    key = fnv1a64_bytes(&profile_hash, sizeof profile_hash, key);
    const uint64_t parent = baseline.hash();
    key = fnv1a64_bytes(&parent, sizeof parent, key);

    if (registry) {
      if (auto cached = registry->lookup(key)) {
        SpecializeAttempt attempt;
        attempt.profile = prof.name;
        attempt.from_registry = true;
        attempt.passed = true;
        attempt.score = cached->score;
        result.attempts.push_back(attempt);
        result.bundle = std::move(cached->bundle);
        result.profile_used = prof.name;
        result.from_registry = true;
        result.validation_score = cached->score;
        result.specialize_seconds = elapsed();
        return result;
      }
    }

    if (!stream_ready) {
      stream = collect_prompt_stream(plan, tables);
      stream_ready = true;
    }
    if (stream.empty()) break;  // nothing to calibrate on; run the baseline

    SpecializeAttempt attempt;
    attempt.profile = prof.name;
    try {
      Rng calib_rng(rng_base ^ fnv1a64("calib-" + prof.name));
      Rng holdout_rng(rng_base ^ fnv1a64("holdout-" + prof.name));
      const auto calib_prompts = sample_prompts(stream, prof.recipe.calibration_k, calib_rng);
      const auto holdout = sample_prompts(stream, prof.recipe.holdout_m, holdout_rng);

      Rng capture_rng(rng_base ^ fnv1a64("capture-" + prof.name));
      const CalibrationSet calib = capture_calibration(
          baseline_rt, calib_prompts, static_cast<int>(calib_prompts.size()), capture_rng);
      ModelBundle candidate = apply_recipe(baseline, prof.recipe, calib, &attempt.events);
      const ModelRuntime candidate_rt(candidate);
      const ValidationReport report = validate(candidate_rt, baseline_rt, holdout,
                                               prof.recipe.validation_tau, max_new_tokens,
                                               counter);
      attempt.score = report.score;
      attempt.passed = report.pass;
      result.attempts.push_back(attempt);
      if (report.pass) {
        result.bundle = std::move(candidate);
        result.profile_used = prof.name;
        result.validation_score = report.score;
        if (registry) result.bundle_path = registry->store(key, result.bundle, report.score);
        result.specialize_seconds = elapsed();
        return result;
      }
    } catch (const Error& e) {
      attempt.events.push_back(std::string("attempt failed: ") + e.what());
      result.attempts.push_back(attempt);
    }
  }

  // Every candidate failed validation: the baseline is the documented
  // fallback and is trivially valid.
  SpecializeAttempt attempt;
  attempt.profile = "baseline";
  attempt.passed = true;
  attempt.score = 1.0;
  result.attempts.push_back(attempt);
  result.bundle = baseline;
  result.profile_used = "baseline";
  result.validation_score = 1.0;
  result.specialize_seconds = elapsed();
  return result;
}

}  // namespace iolm
