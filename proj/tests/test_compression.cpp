// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "iolm/calib.hpp"
#include "iolm/common.hpp"
#include "iolm/compress.hpp"
#include "iolm/prune.hpp"
#include "iolm/quant.hpp"
#include "iolm/recipe.hpp"
#include "iolm/rng.hpp"
#include "iolm/train.hpp"

using namespace iolm;

namespace {

Matrix random_matrix(int rows, int cols, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
  Matrix m(rows, cols);
  for (auto& v : m.data) v = lo + (hi - lo) * rng.next_float();
  return m;
}

Matrix random_normal(int rows, int cols, Rng& rng) {
  Matrix m(rows, cols);
  for (auto& v : m.data) v = static_cast<float>(rng.next_normal());
  return m;
}

ModelConfig tiny_config() { return ModelConfig::dense(32, 2, 2, 64, 96); }

ModelBundle tiny_bundle(uint64_t seed) {
  Rng rng(seed);
  return ToyModelParams::init(tiny_config(), rng).to_bundle();
}

CalibrationSet tiny_calibration(const ModelBundle& bundle, int prompts = 6) {
  ModelRuntime rt(bundle);
  std::vector<std::string> ps;
  Rng rng(99);
  for (int i = 0; i < prompts; ++i) {
    std::string p;
    const int len = 6 + static_cast<int>(rng.next_below(20));
    for (int j = 0; j < len; ++j) p.push_back(static_cast<char>('a' + rng.next_below(26)));
    ps.push_back(p);
  }
  Rng crng(1);
  return capture_calibration(rt, ps, prompts, crng);
}

}  // namespace

TEST_CASE("rtn zero row falls back to scale 1") {
  Matrix w(1, 3, {0.0f, 0.0f, 0.0f});
  const QuantResult q = quantize_rtn(w, 8);
  CHECK(q.scales[0] == 1.0f);
  CHECK(q.codes == std::vector<int8_t>{0, 0, 0});
}

TEST_CASE("rtn scalar oracle with round-half-to-even, 8 bit") {
  Matrix w(1, 3, {1.0f, -2.0f, 0.5f});
  const QuantResult q = quantize_rtn(w, 8);
  CHECK(q.scales[0] == 2.0f / 127.0f);
  CHECK(q.codes[0] == 64);  // 63.5 rounds to even
  CHECK(q.codes[1] == -127);
  CHECK(q.codes[2] == 32);  // 31.75 rounds to nearest
}

TEST_CASE("rtn scalar oracle with round-half-to-even, 4 bit") {
  Matrix w(1, 3, {7.0f, -7.0f, 3.5f});
  const QuantResult q = quantize_rtn(w, 4);
  CHECK(q.scales[0] == 1.0f);
  CHECK(q.codes[0] == 7);
  CHECK(q.codes[1] == -7);
  CHECK(q.codes[2] == 4);  // 3.5 rounds to even 4
}

TEST_CASE("rtn dequant error per element is at most scale/2") {
  Rng rng(5);
  for (int bits : {4, 8}) {
    Matrix w = random_matrix(8, 16, rng, -3.0f, 3.0f);
    const QuantResult q = quantize_rtn(w, bits);
    Matrix deq = q.dequantize(8, 16);
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 16; ++c)
        CHECK(std::fabs(deq.at(r, c) - w.at(r, c)) <= q.scales[r] * 0.5f + 1e-6f);
  }
}

TEST_CASE("gptq equals rtn when weights already sit on the grid") {
  Rng rng(7);
  const int rows = 4, cols = 8;
  Matrix base = random_matrix(rows, cols, rng);
  const QuantResult rtn0 = quantize_rtn(base, 8);
  Matrix on_grid = rtn0.dequantize(rows, cols);
  Matrix x = random_normal(32, cols, rng);

  const QuantResult rtn = quantize_rtn(on_grid, 8);
  const QuantResult gptq = quantize_gptq(on_grid, x, 8, 0.01);
  CHECK(gptq.codes == rtn.codes);
  CHECK(gptq.scales == rtn.scales);
  CHECK(reconstruction_error(on_grid, gptq.dequantize(rows, cols), x) == 0.0);
}

TEST_CASE("gptq on a single column equals rtn") {
  Rng rng(8);
  Matrix w = random_matrix(5, 1, rng);
  Matrix x = random_normal(16, 1, rng);
  const QuantResult rtn = quantize_rtn(w, 8);
  const QuantResult gptq = quantize_gptq(w, x, 8, 0.01);
  CHECK(gptq.codes == rtn.codes);
}

TEST_CASE("gptq reconstruction error never exceeds rtn on random instances") {
  int wins_or_ties = 0;
  const int trials = 25;  // the acceptance suite runs the full 100
  for (int t = 0; t < trials; ++t) {
    Rng rng(1000 + t);
    Matrix w = random_matrix(16, 16, rng);
    Matrix x = random_normal(64, 16, rng);
    const int bits = (t % 2) ? 4 : 8;
    const QuantResult rtn = quantize_rtn(w, bits);
    const QuantResult gptq = quantize_gptq(w, x, bits, 0.01);
    const double e_rtn = reconstruction_error(w, rtn.dequantize(16, 16), x);
    const double e_gptq = reconstruction_error(w, gptq.dequantize(16, 16), x);
    wins_or_ties += e_gptq <= e_rtn;
  }
  CHECK(wins_or_ties == trials);
}

TEST_CASE("magnitude 2:4 keeps the two largest magnitudes") {
  Matrix w(1, 4, {0.1f, -0.5f, 0.3f, 0.05f});
  const SparsifyResult res =
      sparsify(w, SparsePattern::two_of_four, 0.0, SparsifyMethod::magnitude, nullptr, 0.01);
  CHECK(res.values.data == std::vector<float>{0.0f, -0.5f, 0.3f, 0.0f});
  CHECK(res.mask == std::vector<uint8_t>{0, 1, 1, 0});
}

TEST_CASE("2:4 ties keep the lowest indices") {
  Matrix w(1, 4, {1.0f, 1.0f, 1.0f, 1.0f});
  const SparsifyResult res =
      sparsify(w, SparsePattern::two_of_four, 0.0, SparsifyMethod::magnitude, nullptr, 0.01);
  CHECK(res.mask == std::vector<uint8_t>{1, 1, 0, 0});
}

TEST_CASE("2:4 requires the input dim to be divisible by four") {
  Matrix w(2, 6);
  CHECK_THROWS_AS(
      sparsify(w, SparsePattern::two_of_four, 0.0, SparsifyMethod::magnitude, nullptr, 0.01),
      PatternMismatch);
}

TEST_CASE("unstructured magnitude drops the requested fraction") {
  Rng rng(9);
  Matrix w = random_matrix(8, 8, rng);
  const SparsifyResult res =
      sparsify(w, SparsePattern::unstructured, 0.5, SparsifyMethod::magnitude, nullptr, 0.01);
  int zeros = 0;
  for (float v : res.values.data) zeros += v == 0.0f;
  CHECK(zeros == 32);
  // Every kept magnitude >= every dropped magnitude.
  float min_kept = 1e9f, max_dropped = 0.0f;
  for (size_t i = 0; i < res.mask.size(); ++i) {
    if (res.mask[i])
      min_kept = std::min(min_kept, std::fabs(w.data[i]));
    else
      max_dropped = std::max(max_dropped, std::fabs(w.data[i]));
  }
  CHECK(min_kept >= max_dropped);
}

TEST_CASE("compensated 2:4 error at most magnitude error on most instances") {
  int wins_or_ties = 0;
  const int trials = 25;
  for (int t = 0; t < trials; ++t) {
    Rng rng(2000 + t);
    Matrix w = random_matrix(16, 16, rng);
    Matrix x = random_normal(64, 16, rng);
    const SparsifyResult mag =
        sparsify(w, SparsePattern::two_of_four, 0.0, SparsifyMethod::magnitude, nullptr, 0.01);
    const SparsifyResult comp =
        sparsify(w, SparsePattern::two_of_four, 0.0, SparsifyMethod::compensated, &x, 0.01);
    CHECK(check_two_of_four(comp.values));
    const double e_mag = reconstruction_error(w, mag.values, x);
    const double e_comp = reconstruction_error(w, comp.values, x);
    wins_or_ties += e_comp <= e_mag;
  }
  CHECK(wins_or_ties >= 23);  // approximate scores; acceptance asserts >= 95/100
}

TEST_CASE("prune with zero ratios returns a hash-equal bundle") {
  const ModelBundle bundle = tiny_bundle(1);
  const CalibrationSet calib = tiny_calibration(bundle);
  const ModelBundle out = prune_structural(bundle, calib, 0.0, 0.0);
  CHECK(out.hash() == bundle.hash());
}

TEST_CASE("prune removes the lowest-importance heads") {
  // Build a bundle where head importances are forced by scaling Wo blocks.
  ModelBundle bundle = tiny_bundle(2);
  ToyModelParams params = ToyModelParams::from_bundle(bundle);
  const int hd = params.config.head_dim();
  // Layer 0: head 0 contributes strongly, head 1 almost nothing.
  for (int r = 0; r < params.config.d_model; ++r)
    for (int j = 0; j < hd; ++j) {
      params.layers[0].wo.at(r, 0 * hd + j) *= 50.0f;
      params.layers[0].wo.at(r, 1 * hd + j) *= 1e-3f;
    }
  bundle = params.to_bundle();
  const CalibrationSet calib = tiny_calibration(bundle);
  const ModelBundle out = prune_structural(bundle, calib, 0.5, 0.0);
  CHECK(out.config.active_heads[0] == std::vector<int>{0});
  CHECK(out.config.active_ffn[0] == 64);
  CHECK(out.tensor("layers.0.attn.wq").rows == hd);
  CHECK(out.tensor("layers.0.attn.wo").cols == hd);
  // Forward still runs and produces full-width logits.
  ModelRuntime rt(out);
  FlopCounter fc;
  const int ids[] = {129, 'a'};
  CHECK(rt.forward(ids, {}, fc).cols == 131);
}

TEST_CASE("prune at ratio 0.5 halves attention flops per token") {
  const ModelBundle bundle = tiny_bundle(3);
  const CalibrationSet calib = tiny_calibration(bundle);
  const ModelBundle pruned = prune_structural(bundle, calib, 0.5, 0.5);
  // Compare attention-only flops via configs with FFN contribution removed.
  const uint64_t dense_total = full_forward_flops(bundle.config, 16);
  const uint64_t pruned_total = full_forward_flops(pruned.config, 16);
  ModelConfig no_attn = bundle.config;  // isolate attention by zero... use arithmetic instead
  const uint64_t d = bundle.config.d_model;
  uint64_t dense_attn = 0, pruned_attn = 0;
  for (int l = 0; l < 2; ++l) {
    const uint64_t kh_dense = bundle.config.layer_heads(l) * bundle.config.head_dim();
    const uint64_t kh_pruned = pruned.config.layer_heads(l) * pruned.config.head_dim();
    dense_attn += 4 * 16 * d * kh_dense + kh_dense * 16 * 17;
    pruned_attn += 4 * 16 * d * kh_pruned + kh_pruned * 16 * 17;
  }
  CHECK(pruned_attn * 2 == dense_attn);  // exactly half the heads survive
  CHECK(pruned_total < dense_total);
}

TEST_CASE("prune rejects ratios at or above one") {
  const ModelBundle bundle = tiny_bundle(4);
  const CalibrationSet calib = tiny_calibration(bundle);
  CHECK_THROWS_AS(prune_structural(bundle, calib, 1.0, 0.0), ContractViolation);
}

TEST_CASE("recipe json round trip and validation errors") {
  const auto j = nlohmann::json::parse(R"({
    "steps": [
      {"op": "prune", "head_ratio": 0.5, "ffn_ratio": 0.5},
      {"op": "sparsify", "pattern": "two_of_four", "method": "compensated"},
      {"op": "quantize", "bits": 8, "method": "gptq"}
    ],
    "calibration_k": 128, "lambda_rel": 0.01, "tau": 0.85, "holdout_m": 64
  })");
  const CompressionRecipe r = CompressionRecipe::from_json(j);
  CHECK(r.prune->head_ratio == 0.5);
  CHECK(r.sparsify->pattern == SparsePattern::two_of_four);
  CHECK(r.quantize->bits == 8);
  CHECK(r.validation_tau == 0.85);
  CHECK(CompressionRecipe::from_json(r.to_json()).id() == r.id());

  auto expect_error = [](const char* text, const char* fragment) {
    try {
      CompressionRecipe::from_json(nlohmann::json::parse(text));
      FAIL_CHECK("expected error containing: ", fragment);
    } catch (const ContractViolation& e) {
      CHECK(std::string(e.what()).find(fragment) != std::string::npos);
    }
  };
  expect_error(R"({"steps":[{"op":"melt"}]})", "unknown op");
  expect_error(R"({"steps":[{"op":"quantize","bits":3,"method":"rtn"}]})", "bits must be 4 or 8");
  expect_error(R"({"steps":[{"op":"quantize","bits":8,"method":"rtn"},
                            {"op":"prune","head_ratio":0.1,"ffn_ratio":0.1}]})", "ordered");
  expect_error(R"({"steps":[{"op":"prune","head_ratio":1.5,"ffn_ratio":0.1}]})", "[0, 1)");
  expect_error(R"({"steps":[{"op":"sparsify","pattern":"diagonal","method":"magnitude"}]})",
               "unknown sparsify pattern");
  expect_error(R"({"steps":[], "tau": 7})", "'tau' must be in [0, 1]");
}

TEST_CASE("empty recipe returns a hash-equal bundle") {
  const ModelBundle bundle = tiny_bundle(5);
  const CalibrationSet calib = tiny_calibration(bundle);
  const CompressionRecipe recipe;
  CHECK(apply_recipe(bundle, recipe, calib).hash() == bundle.hash());
}

TEST_CASE("quantize-only recipe makes every weight tensor q8") {
  const ModelBundle bundle = tiny_bundle(6);
  const CalibrationSet calib = tiny_calibration(bundle);
  CompressionRecipe recipe;
  recipe.quantize = CompressionRecipe::QuantizeStep{8, CompressionRecipe::QuantizeStep::Method::rtn};
  const ModelBundle out = apply_recipe(bundle, recipe, calib);
  for (const auto& t : out.tensors) {
    const bool weight = t.name.find(".attn.w") != std::string::npos ||
                        t.name.find(".ffn.w") != std::string::npos;
    CHECK(t.encoding == (weight ? TensorEncoding::q8_perchannel : TensorEncoding::dense_f32));
  }
  CHECK(out.parent_hash == bundle.hash_hex());
  CHECK(out.recipe_id == "quantize(8,rtn)");
  // Still loadable and runnable.
  ModelRuntime rt(out);
  FlopCounter fc;
  const int ids[] = {129, 'x'};
  rt.forward(ids, {}, fc);
}

TEST_CASE("full perf-style recipe produces valid sparse24 tensors and shrinks size") {
  const ModelBundle bundle = tiny_bundle(7);
  const CalibrationSet calib = tiny_calibration(bundle, 8);
  CompressionRecipe recipe;
  recipe.prune = CompressionRecipe::PruneStep{0.5, 0.5};
  recipe.sparsify = CompressionRecipe::SparsifyStep{SparsePattern::two_of_four, 0.0,
                                                    SparsifyMethod::compensated};
  recipe.quantize = CompressionRecipe::QuantizeStep{8, CompressionRecipe::QuantizeStep::Method::gptq};
  std::vector<std::string> events;
  const ModelBundle out = apply_recipe(bundle, recipe, calib, &events);

  int sparse_tensors = 0;
  for (const auto& t : out.tensors)
    if (t.encoding == TensorEncoding::sparse24_q8) {
      ++sparse_tensors;
      CHECK(check_two_of_four(out.decode_tensor(t)));
    }
  CHECK(sparse_tensors > 0);
  CHECK(estimate_size(out) < estimate_size(bundle) / 2);

  // Compressed bundle and its dense-dequantized twin produce identical logits.
  ModelBundle twin;
  twin.config = out.config;
  for (const auto& t : out.tensors) twin.append_dense(t.name, out.decode_tensor(t));
  ModelRuntime rt_out(out), rt_twin(twin);
  Rng rng(4);
  for (int trial = 0; trial < 4; ++trial) {
    std::vector<int> ids{129};
    const int len = 1 + static_cast<int>(rng.next_below(12));
    for (int i = 0; i < len; ++i) ids.push_back(static_cast<int>(rng.next_below(128)));
    FlopCounter fc;
    Matrix a = rt_out.forward(ids, {}, fc);
    Matrix b = rt_twin.forward(ids, {}, fc);
    CHECK(std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0);
  }
}

TEST_CASE("adding steps never increases the size estimate") {
  const ModelBundle bundle = tiny_bundle(8);
  const CalibrationSet calib = tiny_calibration(bundle);

  std::vector<CompressionRecipe> recipes;
  CompressionRecipe base;
  recipes.push_back(base);
  CompressionRecipe q8 = base;
  q8.quantize = CompressionRecipe::QuantizeStep{8, CompressionRecipe::QuantizeStep::Method::rtn};
  recipes.push_back(q8);
  CompressionRecipe q4 = base;
  q4.quantize = CompressionRecipe::QuantizeStep{4, CompressionRecipe::QuantizeStep::Method::rtn};
  recipes.push_back(q4);
  CompressionRecipe sp = base;
  sp.sparsify =
      CompressionRecipe::SparsifyStep{SparsePattern::two_of_four, 0.0, SparsifyMethod::magnitude};
  recipes.push_back(sp);

  for (const auto& r : recipes) {
    const uint64_t before = estimate_size(apply_recipe(bundle, r, calib));
    // Add a prune step.
    if (!r.prune) {
      CompressionRecipe extended = r;
      extended.prune = CompressionRecipe::PruneStep{0.5, 0.5};
      CHECK(estimate_size(apply_recipe(bundle, extended, calib)) <= before);
    }
    // Add a sparsify step.
    if (!r.sparsify) {
      CompressionRecipe extended = r;
      extended.sparsify = CompressionRecipe::SparsifyStep{SparsePattern::two_of_four, 0.0,
                                                          SparsifyMethod::magnitude};
      CHECK(estimate_size(apply_recipe(bundle, extended, calib)) <= before);
    }
    // Add a quantize step.
    if (!r.quantize) {
      CompressionRecipe extended = r;
      extended.quantize =
          CompressionRecipe::QuantizeStep{8, CompressionRecipe::QuantizeStep::Method::rtn};
      CHECK(estimate_size(apply_recipe(bundle, extended, calib)) <= before);
    }
  }
}

TEST_CASE("recipe application is deterministic") {
  const ModelBundle bundle = tiny_bundle(9);
  const CalibrationSet calib = tiny_calibration(bundle);
  CompressionRecipe recipe;
  recipe.sparsify = CompressionRecipe::SparsifyStep{SparsePattern::two_of_four, 0.0,
                                                    SparsifyMethod::compensated};
  recipe.quantize =
      CompressionRecipe::QuantizeStep{8, CompressionRecipe::QuantizeStep::Method::gptq};
  CHECK(apply_recipe(bundle, recipe, calib).hash() == apply_recipe(bundle, recipe, calib).hash());
}

TEST_CASE("capture determinism and shapes") {
  const ModelBundle bundle = tiny_bundle(10);
  ModelRuntime rt(bundle);
  const std::vector<std::string> prompts = {"one", "two two"};
  Rng r1(3), r2(3);
  const CalibrationSet a = capture_calibration(rt, prompts, 2, r1);
  const CalibrationSet b = capture_calibration(rt, prompts, 2, r2);
  CHECK(a.fingerprint == b.fingerprint);
  // (3 chars + BOS) + (7 chars + BOS) = 12 positions.
  CHECK(a.inputs.at("layers.0.attn_in").rows == 12);
  CHECK(a.inputs.at("layers.0.attn_in").cols == 32);
  CHECK(a.inputs.at("layers.1.ffn_mid").cols == 64);
  CHECK_THROWS_AS(capture_calibration(rt, {}, 1, r1), EmptyCalibration);
}

TEST_CASE("calibration subsampling respects k") {
  const ModelBundle bundle = tiny_bundle(11);
  ModelRuntime rt(bundle);
  std::vector<std::string> prompts;
  for (int i = 0; i < 10; ++i) prompts.push_back("prompt " + std::to_string(i));
  Rng rng(4);
  const CalibrationSet c = capture_calibration(rt, prompts, 4, rng);
  CHECK(c.sample_count == 4);
  CHECK(c.prompts.size() == 4);
  // Original order preserved.
  for (size_t i = 1; i < c.prompts.size(); ++i) CHECK(c.prompts[i - 1] < c.prompts[i]);
}
