// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance suite. Runs every release criterion at its stated
// tolerance and prints one PASS/FAIL line each; exits non-zero when any
// criterion fails. The full run trains the reference model and executes the
// three 500-row workloads, which takes roughly half an hour on a laptop
// core. --quick shrinks rows and steps for development smoke runs (results
// are then informational, not criteria).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "iolm/bench.hpp"
#include "iolm/calib.hpp"
#include "iolm/common.hpp"
#include "iolm/compress.hpp"
#include "iolm/exec.hpp"
#include "iolm/optimize.hpp"
#include "iolm/prune.hpp"
#include "iolm/quant.hpp"
#include "iolm/rng.hpp"
#include "iolm/sql.hpp"
#include "iolm/tasks.hpp"
#include "iolm/tokenizer.hpp"
#include "iolm/train.hpp"

using namespace iolm;

namespace {

struct Criterion {
  std::string name;
  bool pass = false;
  std::string detail;
};

std::vector<Criterion> g_results;

void report(const std::string& name, bool pass, const std::string& detail) {
  g_results.push_back({name, pass, detail});
  std::printf("%s  %-55s %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Matrix random_uniform(int rows, int cols, Rng& rng) {
  Matrix m(rows, cols);
  for (auto& v : m.data) v = 2.0f * rng.next_float() - 1.0f;
  return m;
}

Matrix random_normal(int rows, int cols, Rng& rng) {
  Matrix m(rows, cols);
  for (auto& v : m.data) v = static_cast<float>(rng.next_normal());
  return m;
}

// ---------------------------------------------------------------------------
// Criterion 4: GPTQ reconstruction error <= RTN on 100 seeded instances.
// ---------------------------------------------------------------------------
void criterion_gptq_dominance() {
  int wins = 0;
  double worst_margin = 1e9;
  for (int t = 0; t < 100; ++t) {
    Rng rng(4000 + t);
    const Matrix w = random_uniform(16, 16, rng);
    const Matrix x = random_normal(64, 16, rng);
    const int bits = (t % 2 == 0) ? 8 : 4;
    const QuantResult rtn = quantize_rtn(w, bits);
    const QuantResult gptq = quantize_gptq(w, x, bits, 0.01);
    const double e_rtn = reconstruction_error(w, rtn.dequantize(16, 16), x);
    const double e_gptq = reconstruction_error(w, gptq.dequantize(16, 16), x);
    wins += e_gptq <= e_rtn;
    worst_margin = std::min(worst_margin, e_rtn - e_gptq);
  }
  std::ostringstream d;
  d << wins << "/100 instances, worst margin " << worst_margin;
  report("4. GPTQ error <= RTN error (100/100 required)", wins == 100, d.str());
}

// ---------------------------------------------------------------------------
// Criterion 5: compensated 2:4 error <= magnitude error in >= 95/100.
// ---------------------------------------------------------------------------
void criterion_sparse_dominance() {
  int wins = 0;
  for (int t = 0; t < 100; ++t) {
    Rng rng(5000 + t);
    const Matrix w = random_uniform(16, 16, rng);
    const Matrix x = random_normal(64, 16, rng);
    const SparsifyResult mag =
        sparsify(w, SparsePattern::two_of_four, 0.0, SparsifyMethod::magnitude, nullptr, 0.01);
    const SparsifyResult comp =
        sparsify(w, SparsePattern::two_of_four, 0.0, SparsifyMethod::compensated, &x, 0.01);
    const double e_mag = reconstruction_error(w, mag.values, x);
    const double e_comp = reconstruction_error(w, comp.values, x);
    wins += e_comp <= e_mag;
  }
  std::ostringstream d;
  d << wins << "/100 instances";
  report("5. compensated 2:4 error <= magnitude (>=95/100)", wins >= 95, d.str());
}

// ---------------------------------------------------------------------------
// Criterion 10: parser criteria.
// ---------------------------------------------------------------------------
void criterion_parser() {
  bool ok = true;
  std::string detail;

  try {
    const QueryPlan plan = parse_query(
        "SELECT product_id, user_id, "
        "prompt('summarize in 5 words: ' || review) AS review_summary FROM product_reviews");
    const PlanNode* project = plan.root.get();
    ok = ok && project->kind == PlanNode::Kind::project;
    const PlanNode* op = project->children.at(0).get();
    ok = ok && op->kind == PlanNode::Kind::prompt_op;
    ok = ok && op->children.at(0)->kind == PlanNode::Kind::scan;
    if (!ok) detail = "introductory query plan shape wrong";
  } catch (const Error& e) {
    ok = false;
    detail = e.what();
  }

  // 1,000 grammar-generated queries round trip.
  int round_trips = 0;
  Rng rng(0xC0DE);
  const char* idents[] = {"alpha", "beta", "gamma", "delta", "review", "name_1", "x", "y2"};
  auto ident = [&rng, &idents] { return std::string(idents[rng.next_below(8)]); };
  for (int t = 0; t < 1000; ++t) {
    std::ostringstream q;
    q << "SELECT ";
    const int items = 1 + static_cast<int>(rng.next_below(4));
    for (int i = 0; i < items; ++i) {
      if (i) q << ", ";
      switch (rng.next_below(4)) {
        case 0: q << ident(); break;
        case 1: q << static_cast<int64_t>(rng.next_below(1000)) - 500; break;
        case 2: q << "'lit" << rng.next_below(100) << "'"; break;
        default:
          q << "prompt('p: ' || " << ident();
          if (rng.next_below(2)) q << " || '" << rng.next_below(10) << "'";
          q << ")";
          break;
      }
      if (rng.next_below(2)) q << " AS a" << rng.next_below(100);
    }
    q << " FROM " << ident();
    if (rng.next_below(3) == 0)
      q << " SEMANTIC JOIN " << ident() << " ON " << ident() << " ~ " << ident();
    if (rng.next_below(2) == 0) {
      q << " WHERE " << ident();
      switch (rng.next_below(5)) {
        case 0: q << " = 5"; break;
        case 1: q << " <> 'x'"; break;
        case 2: q << " < 3.25"; break;
        case 3: q << " > -2"; break;
        default: q << " LIKE 'pre%'"; break;
      }
    }
    try {
      const QueryPlan p1 = parse_query(q.str());
      const QueryPlan p2 = parse_query(pretty_print(p1));
      if (plan_equal(p1, p2)) ++round_trips;
    } catch (const Error&) {
      // counted as a failure via round_trips
    }
  }
  ok = ok && round_trips == 1000;

  // Malformed corpus: every case must carry a position.
  const char* malformed[] = {
      "", "SELEKT a FROM t", "SELECT", "SELECT a", "SELECT a FROM", "SELECT a FROM 5",
      "SELECT a, FROM t", "SELECT a AS FROM t", "SELECT prompt FROM t", "SELECT prompt( FROM t",
      "SELECT prompt('x' FROM t", "SELECT prompt('x' ||) FROM t",
      "SELECT prompt(prompt('x')) FROM t", "SELECT a FROM t WHERE", "SELECT a FROM t WHERE b",
      "SELECT a FROM t WHERE b =", "SELECT a FROM t WHERE b LIKE 5",
      "SELECT a FROM t WHERE b LIKE 'a%b'", "SELECT a FROM t SEMANTIC",
      "SELECT a FROM t SEMANTIC JOIN", "SELECT a FROM t SEMANTIC JOIN u ON",
      "SELECT a FROM t SEMANTIC JOIN u ON a b", "SELECT a FROM t extra",
      "SELECT 'unterminated FROM t", "SELECT a FROM t WHERE b ~ c", "SELECT ||x FROM t",
  };
  int positioned = 0;
  for (const char* sql : malformed) {
    try {
      parse_query(sql);
    } catch (const ParseError& e) {
      if (e.line >= 1 && e.column >= 1 && !e.expected.empty()) ++positioned;
    } catch (const Error&) {
    }
  }
  const int n_malformed = static_cast<int>(std::size(malformed));
  ok = ok && positioned == n_malformed;

  std::ostringstream d;
  d << round_trips << "/1000 round trips, " << positioned << "/" << n_malformed
    << " position-bearing errors" << (detail.empty() ? "" : ("; " + detail));
  report("10. parser: plan shape, round trips, error positions", ok, d.str());
}

// ---------------------------------------------------------------------------
// Criterion 9a: trainer gradients vs central finite differences.
// ---------------------------------------------------------------------------
void criterion_gradients() {
  const ModelConfig cfg = ModelConfig::dense(16, 2, 2, 32, 48);
  Rng rng(31);
  ToyModelParams params = ToyModelParams::init(cfg, rng);
  std::vector<TrainSequence> seqs = {
      build_train_sequence({"fix: qd", "ad"}),
      build_train_sequence({"same: a | b ->", "n"}),
  };
  int total = 0;
  for (const auto& s : seqs) total += static_cast<int>(s.ids.size()) - s.loss_start - 1;
  ToyModelParams grads = ToyModelParams::zeros_like(params);
  for (const auto& s : seqs) sequence_loss_and_grad(params, s, 1.0 / total, grads);

  auto batch_loss = [&](const ToyModelParams& p) {
    double sum = 0.0;
    for (const auto& s : seqs) sum += sequence_loss<double>(p, s).first;
    return sum / total;
  };

  std::vector<const Matrix*> grad_list;
  grads.for_each([&grad_list](const std::string&, Matrix& m) { grad_list.push_back(&m); });

  double worst = 0.0;
  std::string worst_name;
  size_t idx = 0;
  params.for_each([&](const std::string& name, Matrix& theta) {
    const Matrix& g = *grad_list[idx++];
    double diff_sq = 0.0, ref_sq = 0.0;
    for (size_t i = 0; i < theta.data.size(); ++i) {
      const float saved = theta.data[i];
      const float h = 1e-3f;
      theta.data[i] = saved + h;
      const double lp = batch_loss(params);
      theta.data[i] = saved - h;
      const double lm = batch_loss(params);
      theta.data[i] = saved;
      const double fd = (lp - lm) / (2.0 * h);
      diff_sq += (fd - g.data[i]) * (fd - g.data[i]);
      ref_sq += fd * fd;
    }
    const double rel = std::sqrt(diff_sq) / std::max(std::sqrt(ref_sq), 1e-8);
    if (rel > worst) {
      worst = rel;
      worst_name = name;
    }
  });
  std::ostringstream d;
  d << "worst tensor " << worst_name << " rel err " << worst;
  report("9a. gradients within 1e-3 of finite differences", worst <= 1e-3, d.str());
}

// ---------------------------------------------------------------------------
// Criterion 9b: toy training reaches >=99% per task within 10 minutes.
// ---------------------------------------------------------------------------
ModelBundle criterion_training(int steps, int batch, bool quick) {
  Rng rng(42);
  TrainOptions opts;
  opts.batch_size = batch;
  opts.log_every = 200;
  opts.progress = [](int step, double loss) {
    std::fprintf(stderr, "  train step %5d loss %.4f\n", step, loss);
  };
  const auto t0 = std::chrono::steady_clock::now();
  const ModelBundle bundle =
      train_toy(ModelConfig::reference(),
                {TaskKind::summarize, TaskKind::correct, TaskKind::fuzzyjoin}, steps, rng, opts);
  const double train_seconds = seconds_since(t0);

  const ModelRuntime rt(bundle);
  Rng eval_rng(777);
  double worst = 1.0;
  std::ostringstream accs;
  for (const TaskKind kind : {TaskKind::summarize, TaskKind::correct, TaskKind::fuzzyjoin}) {
    const double acc = exact_match_rate(rt, kind, 64, eval_rng);
    worst = std::min(worst, acc);
    accs << task_name(kind) << " " << acc << "  ";
  }
  std::ostringstream d;
  d << accs.str() << "(" << steps << " steps, " << static_cast<int>(train_seconds) << " s)";
  const bool pass = worst >= 0.99 && train_seconds <= 600.0;
  report(quick ? "9b. [quick] toy training accuracy (informational)"
               : "9b. toy training >=99% per task within 10 minutes",
         quick || pass, d.str());
  return bundle;
}

// ---------------------------------------------------------------------------
// Criterion 1: size reductions.
// ---------------------------------------------------------------------------
ModelBundle criterion_size(const ModelBundle& trained) {
  // Calibration from the summarize workload's rendered prompts.
  const auto rows = generate_summarize_rows(128, 9);
  std::vector<std::string> prompts;
  for (const auto& r : rows) prompts.push_back(render_summarize_prompt(r.review));
  const ModelRuntime rt(trained);
  Rng rng(1);
  const CalibrationSet calib = capture_calibration(rt, prompts, 128, rng);

  const CompressionRecipe perf = OptimizationProfile::perf().recipe;
  std::vector<std::string> events;
  const ModelBundle compressed = apply_recipe(trained, perf, calib, &events);

  const auto before = estimate_size(trained);
  const auto after = estimate_size(compressed);
  const double reduction = 1.0 - static_cast<double>(after) / before;

  // 4-bit + 2:4 linear layer payload arithmetic (the 2:4 mask stores as
  // q4_perchannel; zeros quantize to zero codes).
  const uint64_t dense_bytes = TensorRecord::payload_bytes(128, 128, TensorEncoding::dense_f32);
  const uint64_t q4_bytes = TensorRecord::payload_bytes(128, 128, TensorEncoding::q4_perchannel);
  const double layer_reduction = 1.0 - static_cast<double>(q4_bytes) / dense_bytes;

  std::ostringstream d;
  d << "perf recipe " << before << " -> " << after << " bytes (" << reduction * 100
    << "% saved); 4-bit layer " << layer_reduction * 100 << "% saved";
  report("1. perf size cut >=60%; 4-bit+2:4 layer >=76%",
         reduction >= 0.60 && layer_reduction >= 0.76, d.str());
  return compressed;
}

// ---------------------------------------------------------------------------
// Criterion 6: every sparse24 tensor in produced bundles decodes to a valid
// 2:4 pattern.
// ---------------------------------------------------------------------------
void criterion_pattern(const std::vector<const ModelBundle*>& bundles) {
  int tensors = 0, violations = 0;
  for (const ModelBundle* bundle : bundles) {
    for (const auto& t : bundle->tensors) {
      if (t.encoding != TensorEncoding::sparse24_q8) continue;
      ++tensors;
      if (!check_two_of_four(bundle->decode_tensor(t))) ++violations;
    }
  }
  std::ostringstream d;
  d << tensors << " sparse24 tensors, " << violations << " violations";
  report("6. 2:4 pattern validity in produced bundles", tensors > 0 && violations == 0, d.str());
}

// ---------------------------------------------------------------------------
// Criterion 7: compressed bundle and dense-dequantized twin produce
// bit-identical logits on 32 random prompts.
// ---------------------------------------------------------------------------
void criterion_equivalence(const ModelBundle& compressed) {
  ModelBundle twin;
  twin.config = compressed.config;
  for (const auto& t : compressed.tensors) twin.append_dense(t.name, compressed.decode_tensor(t));
  const ModelRuntime a(compressed), b(twin);
  Rng rng(7);
  int mismatches = 0;
  for (int trial = 0; trial < 32; ++trial) {
    std::vector<int> ids{Tokenizer::kBos};
    const int len = 1 + static_cast<int>(rng.next_below(40));
    for (int i = 0; i < len; ++i) ids.push_back(static_cast<int>(rng.next_below(128)));
    FlopCounter fc;
    const Matrix la = a.forward(ids, {}, fc);
    const Matrix lb = b.forward(ids, {}, fc);
    if (std::memcmp(la.data.data(), lb.data.data(), la.data.size() * sizeof(float)) != 0)
      ++mismatches;
  }
  std::ostringstream d;
  d << mismatches << "/32 prompts mismatched";
  report("7. compressed vs dense twin bit-identical logits", mismatches == 0, d.str());
}

// ---------------------------------------------------------------------------
// Criterion 8: batch and cache transparency; invocation-count law.
// ---------------------------------------------------------------------------
void criterion_transparency(const ModelBundle& model) {
  // 50%-duplicate dataset from the correct workload.
  const auto rows = generate_correct_rows(40, 21);
  Table t;
  t.name = "typos";
  Column id{.name = "id", .type = ColumnType::integer, .ints = {}};
  Column w{.name = "word", .type = ColumnType::text, .texts = {}};
  for (int i = 0; i < 80; ++i) {
    id.ints.push_back(i);
    w.texts.push_back(rows[i / 2].word);  // each word appears exactly twice
  }
  t.columns = {id, w};
  t.row_count = 80;
  std::set<std::string> distinct(w.texts.begin(), w.texts.end());

  const QueryPlan plan = parse_query("SELECT id, prompt('fix: ' || word) AS fixed FROM typos");
  const ModelRuntime rt(model);

  std::vector<std::string> reference;
  bool identical = true;
  bool invocation_law = true;
  uint64_t law_count = 0;
  for (const int batch : {1, 4, 16, 64}) {
    for (const size_t capacity : {size_t{0}, size_t{65536}}) {
      PromptCache cache(capacity);
      ExecOptions opts;
      opts.batch_size = batch;
      opts.cache_capacity = capacity;
      opts.max_new_tokens = 8;
      ExecStats stats;
      FlopCounter fc;
      const Table out = execute(plan, {{"typos", t}}, rt, cache, opts, stats, fc);
      const auto& col = out.columns.back().texts;
      if (reference.empty())
        reference = col;
      else if (col != reference)
        identical = false;
      if (capacity > 0) {
        if (stats.model_invocations != distinct.size()) invocation_law = false;
        law_count = stats.model_invocations;
      }
    }
  }
  std::ostringstream d;
  d << "outputs identical across B in {1,4,16,64} x cache on/off: " << (identical ? "yes" : "no")
    << "; invocations " << law_count << " vs " << distinct.size() << " distinct";
  report("8. batch/cache transparency and invocation law", identical && invocation_law, d.str());
}

// ---------------------------------------------------------------------------
// Criteria 2 + 3: throughput/FLOP ordering and validation fidelity across
// the three workloads.
// ---------------------------------------------------------------------------
void criteria_bench(const ModelBundle& model, int rows, const std::string& workdir, bool quick,
                    std::vector<ModelBundle>* produced) {
  bool flops_ok = true, speed_ok = true, acc_ok = true, perf_ok = true;
  std::ostringstream d2, d3;

  for (const TaskKind kind : {TaskKind::summarize, TaskKind::correct, TaskKind::fuzzyjoin}) {
    WorkloadSpec spec{kind, rows, 0};
    ExecOptions opts;
    const RunReport report =
        run_benchmark(spec, model, {"baseline", "acc", "perf"}, workdir, opts);
    const ProfileReport* baseline = nullptr;
    const ProfileReport* acc = nullptr;
    const ProfileReport* perf = nullptr;
    for (const auto& p : report.profiles) {
      if (p.profile == "baseline") baseline = &p;
      if (p.profile == "acc") acc = &p;
      if (p.profile == "perf") perf = &p;
    }
    const double flop_cut = 1.0 - perf->flops_per_row / baseline->flops_per_row;
    const double speedup = perf->rows_per_second / baseline->rows_per_second;
    flops_ok = flops_ok && flop_cut >= 0.40 && perf->profile_used == "perf";
    speed_ok = speed_ok && perf->rows_per_second > baseline->rows_per_second;
    acc_ok = acc_ok && acc->profile_used == "acc" && acc->validation_score >= 0.95;
    perf_ok = perf_ok && perf->profile_used == "perf" && perf->validation_score >= 0.85;

    d2 << task_name(kind) << ": flops -" << static_cast<int>(flop_cut * 100) << "% speedup "
       << speedup << "x (" << baseline->rows_per_second << " -> " << perf->rows_per_second
       << " rows/s)  ";
    d3 << task_name(kind) << ": acc " << acc->validation_score << " perf "
       << perf->validation_score << " (used " << perf->profile_used << ")  ";
    std::printf("      %s\n", report.to_text().c_str());
  }

  report(quick ? "2. [quick] perf flops/throughput (informational)"
               : "2. perf cuts flops/row >=40% and beats baseline rows/s",
         quick || (flops_ok && speed_ok), d2.str());
  report(quick ? "3. [quick] validation scores (informational)"
               : "3. validation: acc >=0.95 and perf >=0.85 on all workloads",
         quick || (acc_ok && perf_ok), d3.str());

  // Collect specialized bundles from the registry for the pattern check.
  if (produced) {
    const auto dir = std::filesystem::path(workdir) / "bundles";
    if (std::filesystem::exists(dir)) {
      for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() == ".iolm") produced->push_back(load_bundle(entry.path()));
      }
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  bool quick = false;
  int rows = 500;
  int steps = 1500;
  int batch = 12;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--quick") {
      quick = true;
      rows = 40;
      steps = 200;
    } else if (arg == "--rows" && i + 1 < argc) {
      rows = std::atoi(argv[++i]);
    } else if (arg == "--steps" && i + 1 < argc) {
      steps = std::atoi(argv[++i]);
    } else if (arg == "--batch" && i + 1 < argc) {
      batch = std::atoi(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: %s [--quick] [--rows N] [--steps N] [--batch N]\n", argv[0]);
      return 2;
    }
  }

  const std::string workdir =
      (std::filesystem::temp_directory_path() / "iolm_acceptance").string();
  std::filesystem::remove_all(workdir);
  std::filesystem::create_directories(workdir);

  std::printf("== iolm acceptance suite (%s: rows=%d, train steps=%d) ==\n",
              quick ? "quick" : "full", rows, steps);

  criterion_gptq_dominance();
  criterion_sparse_dominance();
  criterion_parser();
  criterion_gradients();

  const ModelBundle trained = criterion_training(steps, batch, quick);
  const ModelBundle compressed = criterion_size(trained);
  criterion_equivalence(compressed);
  criterion_transparency(trained);

  std::vector<ModelBundle> produced;
  criteria_bench(trained, rows, workdir, quick, &produced);

  std::vector<const ModelBundle*> pattern_bundles{&compressed};
  for (const auto& b : produced) pattern_bundles.push_back(&b);
  criterion_pattern(pattern_bundles);

  int failed = 0;
  for (const auto& c : g_results) failed += !c.pass;
  std::printf("== %zu criteria, %d failed ==\n", g_results.size(), failed);
  return failed == 0 ? 0 : 1;
}
