// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#include "iolm/recipe.hpp"

#include <fstream>
#include <sstream>

#include "iolm/common.hpp"

namespace iolm {

namespace {

[[noreturn]] void bad(const std::string& what) {
  throw ContractViolation("recipe: " + what);
}

double require_ratio(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) bad(std::string("missing field '") + key + "'");
  if (!j[key].is_number()) bad(std::string("field '") + key + "' must be a number");
  const double v = j[key].get<double>();
  if (v < 0.0 || v >= 1.0) bad(std::string("field '") + key + "' must be in [0, 1)");
  return v;
}

}  // namespace

std::string CompressionRecipe::id() const {
  std::ostringstream out;
  if (prune) out << "prune(" << prune->head_ratio << "," << prune->ffn_ratio << ")+";
  if (sparsify) {
    out << "sparsify(";
    if (sparsify->pattern == SparsePattern::two_of_four)
      out << "2:4";
    else
      out << "unstructured:" << sparsify->ratio;
    out << "," << (sparsify->method == SparsifyMethod::magnitude ? "magnitude" : "compensated")
        << ")+";
  }
  if (quantize)
    out << "quantize(" << quantize->bits << ","
        << (quantize->method == QuantizeStep::Method::rtn ? "rtn" : "gptq") << ")+";
  std::string s = out.str();
  if (s.empty()) return "identity";
  s.pop_back();  // trailing '+'
  return s;
}

nlohmann::ordered_json CompressionRecipe::to_json() const {
  nlohmann::ordered_json steps = nlohmann::ordered_json::array();
  if (prune)
    steps.push_back({{"op", "prune"},
                     {"head_ratio", prune->head_ratio},
                     {"ffn_ratio", prune->ffn_ratio}});
  if (sparsify) {
    nlohmann::ordered_json s{{"op", "sparsify"}};
    s["pattern"] = sparsify->pattern == SparsePattern::two_of_four ? "two_of_four" : "unstructured";
    if (sparsify->pattern == SparsePattern::unstructured) s["ratio"] = sparsify->ratio;
    s["method"] = sparsify->method == SparsifyMethod::magnitude ? "magnitude" : "compensated";
    steps.push_back(std::move(s));
  }
  if (quantize)
    steps.push_back({{"op", "quantize"},
                     {"bits", quantize->bits},
                     {"method", quantize->method == QuantizeStep::Method::rtn ? "rtn" : "gptq"}});
  nlohmann::ordered_json out;
  out["steps"] = std::move(steps);
  out["calibration_k"] = calibration_k;
  out["lambda_rel"] = lambda_rel;
  out["tau"] = validation_tau;
  out["holdout_m"] = holdout_m;
  return out;
}

CompressionRecipe CompressionRecipe::from_json(const nlohmann::json& j) {
  if (!j.is_object()) bad("top level must be a JSON object");
  CompressionRecipe r;
  if (!j.contains("steps")) bad("missing field 'steps'");
  if (!j["steps"].is_array()) bad("field 'steps' must be an array");

  // Execution order is fixed; the file must list steps in that order.
  int last_rank = -1;
  for (const auto& step : j["steps"]) {
    if (!step.is_object() || !step.contains("op") || !step["op"].is_string())
      bad("each step needs a string field 'op'");
    const std::string op = step["op"].get<std::string>();
    int rank;
    if (op == "prune")
      rank = 0;
    else if (op == "sparsify")
      rank = 1;
    else if (op == "quantize")
      rank = 2;
    else
      bad("unknown op '" + op + "' (expected prune|sparsify|quantize)");
    if (rank == last_rank) bad("duplicate '" + op + "' step (at most one allowed)");
    if (rank < last_rank) bad("steps must be ordered prune, sparsify, quantize");
    last_rank = rank;

    if (op == "prune") {
      PruneStep p;
      p.head_ratio = require_ratio(step, "head_ratio");
      p.ffn_ratio = require_ratio(step, "ffn_ratio");
      r.prune = p;
    } else if (op == "sparsify") {
      SparsifyStep s;
      if (!step.contains("pattern") || !step["pattern"].is_string())
        bad("sparsify step needs a string field 'pattern'");
      const std::string pattern = step["pattern"].get<std::string>();
      if (pattern == "two_of_four") {
        s.pattern = SparsePattern::two_of_four;
      } else if (pattern == "unstructured") {
        s.pattern = SparsePattern::unstructured;
        s.ratio = require_ratio(step, "ratio");
      } else {
        bad("unknown sparsify pattern '" + pattern + "' (expected two_of_four|unstructured)");
      }
      if (!step.contains("method") || !step["method"].is_string())
        bad("sparsify step needs a string field 'method'");
      const std::string method = step["method"].get<std::string>();
      if (method == "magnitude")
        s.method = SparsifyMethod::magnitude;
      else if (method == "compensated")
        s.method = SparsifyMethod::compensated;
      else
        bad("unknown sparsify method '" + method + "' (expected magnitude|compensated)");
      r.sparsify = s;
    } else {
      QuantizeStep q;
      if (!step.contains("bits") || !step["bits"].is_number_integer())
        bad("quantize step needs an integer field 'bits'");
      q.bits = step["bits"].get<int>();
      if (q.bits != 4 && q.bits != 8) bad("quantize bits must be 4 or 8");
      if (!step.contains("method") || !step["method"].is_string())
        bad("quantize step needs a string field 'method'");
      const std::string method = step["method"].get<std::string>();
      if (method == "rtn")
        q.method = QuantizeStep::Method::rtn;
      else if (method == "gptq")
        q.method = QuantizeStep::Method::gptq;
      else
        bad("unknown quantize method '" + method + "' (expected rtn|gptq)");
      r.quantize = q;
    }
  }

  if (j.contains("calibration_k")) {
    if (!j["calibration_k"].is_number_integer() || j["calibration_k"].get<int>() < 1)
      bad("field 'calibration_k' must be a positive integer");
    r.calibration_k = j["calibration_k"].get<int>();
  }
  if (j.contains("lambda_rel")) {
    if (!j["lambda_rel"].is_number() || j["lambda_rel"].get<double>() <= 0.0)
      bad("field 'lambda_rel' must be a positive number");
    r.lambda_rel = j["lambda_rel"].get<double>();
  }
  if (j.contains("tau")) {
    if (!j["tau"].is_number()) bad("field 'tau' must be a number");
    r.validation_tau = j["tau"].get<double>();
    if (r.validation_tau < 0.0 || r.validation_tau > 1.0) bad("field 'tau' must be in [0, 1]");
  }
  if (j.contains("holdout_m")) {
    if (!j["holdout_m"].is_number_integer() || j["holdout_m"].get<int>() < 1)
      bad("field 'holdout_m' must be a positive integer");
    r.holdout_m = j["holdout_m"].get<int>();
  }
  return r;
}

CompressionRecipe CompressionRecipe::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("recipe: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ContractViolation(std::string("recipe: invalid JSON in ") + path + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace iolm
