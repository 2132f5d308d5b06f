// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

namespace iolm {

struct SourcePos {
  int line = 1;
  int column = 1;
};

// Expression tree for select items and prompt templates: literals, column
// references, prompt(...) calls and '||' concatenations.
struct Expr {
  enum class Kind { column, string_lit, int_lit, float_lit, prompt, concat };
  Kind kind = Kind::column;
  std::string text;  // column name or string literal payload
  int64_t int_value = 0;
  double float_value = 0.0;
  std::vector<Expr> parts;  // concat parts; prompt holds one concat child
  SourcePos pos;
};

struct Predicate {
  enum class Op { eq, ne, lt, gt, like };
  std::string column;
  Op op = Op::eq;
  Expr literal;
  SourcePos pos;
};

struct SelectItem {
  Expr expr;
  std::string name;  // alias or generated default, always materialized
  SourcePos pos;
};

// Logical plan operators. The tree is
//   Project( PromptOp* ( Filter? ( SemanticJoin(Scan,Scan) | Scan ) ) )
// with one PromptOp node per prompt(...) select item, innermost first.
struct PlanNode {
  enum class Kind { scan, semantic_join, filter, prompt_op, project };
  Kind kind = Kind::scan;
  std::vector<std::unique_ptr<PlanNode>> children;
  SourcePos pos;

  std::string table;                       // scan
  std::string left_column, right_column;   // semantic_join (left ~ right)
  Predicate predicate;                     // filter
  Expr prompt_template;                    // prompt_op
  std::string output_column;               // prompt_op
  std::vector<SelectItem> items;           // project
};

struct QueryPlan {
  std::unique_ptr<PlanNode> root;
};

// Recursive-descent parser for the query grammar (README). Keywords are
// case-insensitive. Throws ParseError with 1-based line:column and the
// expected-token set.
QueryPlan parse_query(const std::string& sql);

// Canonical SQL text that re-parses to a structurally identical plan
// (aliases are always written out).
std::string pretty_print(const QueryPlan& plan);

nlohmann::ordered_json plan_to_json(const QueryPlan& plan);

// Structural equality, ignoring source positions.
bool plan_equal(const QueryPlan& a, const QueryPlan& b);

// Canonical SQL text of one expression (template identity, hashing).
std::string expr_canonical(const Expr& e);

}  // namespace iolm
