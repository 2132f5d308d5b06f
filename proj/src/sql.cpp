// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#include "iolm/sql.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>

#include "iolm/common.hpp"
#include "iolm/table.hpp"

namespace iolm {

namespace {

enum class TokKind { ident, string_lit, int_lit, float_lit, comma, lparen, rparen, concat,
                     tilde, eq, ne, lt, gt, end };

struct Token {
  TokKind kind = TokKind::end;
  std::string text;   // identifier (original case) or literal payload
  int64_t int_value = 0;
  double float_value = 0.0;
  SourcePos pos;
};

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return s;
}

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) { next(); }

  const Token& peek() const { return tok_; }

  Token take() {
    Token t = tok_;
    next();
    return t;
  }

 private:
  [[noreturn]] void fail(const std::string& what, std::vector<std::string> expected = {}) {
    if (expected.empty()) expected = {"valid token"};
    throw ParseError(line_, col_, std::move(expected),
                     "syntax error at " + std::to_string(line_) + ":" + std::to_string(col_) +
                         ": " + what);
  }

  char cur() const { return src_[i_]; }
  bool done() const { return i_ >= src_.size(); }

  void advance() {
    if (src_[i_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++i_;
  }

  void next() {
    while (!done() && std::isspace(static_cast<unsigned char>(cur()))) advance();
    tok_ = Token{};
    tok_.pos = {line_, col_};
    if (done()) {
      tok_.kind = TokKind::end;
      return;
    }
    const char c = cur();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::string ident;
      while (!done() && (std::isalnum(static_cast<unsigned char>(cur())) || cur() == '_')) {
        ident.push_back(cur());
        advance();
      }
      tok_.kind = TokKind::ident;
      tok_.text = ident;
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '-' && i_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i_ + 1])))) {
      std::string num;
      bool is_float = false;
      if (cur() == '-') {
        num.push_back('-');
        advance();
      }
      while (!done() && (std::isdigit(static_cast<unsigned char>(cur())) || cur() == '.')) {
        if (cur() == '.') {
          if (is_float) fail("malformed number");
          is_float = true;
        }
        num.push_back(cur());
        advance();
      }
      if (is_float) {
        tok_.kind = TokKind::float_lit;
        tok_.float_value = std::strtod(num.c_str(), nullptr);
      } else {
        tok_.kind = TokKind::int_lit;
        const auto res = std::from_chars(num.data(), num.data() + num.size(), tok_.int_value);
        if (res.ec != std::errc()) fail("integer literal out of range");
      }
      tok_.text = num;
      return;
    }
    switch (c) {
      case '\'': {
        advance();
        std::string value;
        for (;;) {
          if (done()) fail("unterminated string literal");
          if (cur() == '\'') {
            advance();
            if (!done() && cur() == '\'') {  // '' escape
              value.push_back('\'');
              advance();
              continue;
            }
            break;
          }
          if (static_cast<unsigned char>(cur()) > 127) fail("non-ASCII byte in string literal");
          value.push_back(cur());
          advance();
        }
        tok_.kind = TokKind::string_lit;
        tok_.text = value;
        return;
      }
      case ',': tok_.kind = TokKind::comma; advance(); return;
      case '(': tok_.kind = TokKind::lparen; advance(); return;
      case ')': tok_.kind = TokKind::rparen; advance(); return;
      case '~': tok_.kind = TokKind::tilde; advance(); return;
      case '=': tok_.kind = TokKind::eq; advance(); return;
      case '|':
        advance();
        if (done() || cur() != '|') fail("expected '||'");
        advance();
        tok_.kind = TokKind::concat;
        return;
      case '<':
        advance();
        if (!done() && cur() == '>') {
          advance();
          tok_.kind = TokKind::ne;
        } else {
          tok_.kind = TokKind::lt;
        }
        return;
      case '>': tok_.kind = TokKind::gt; advance(); return;
      default:
        fail(std::string("unexpected character '") + c + "'");
    }
  }

  const std::string& src_;
  size_t i_ = 0;
  int line_ = 1;
  int col_ = 1;
  Token tok_;
};

class Parser {
 public:
  explicit Parser(const std::string& sql) : lex_(sql) {}

  QueryPlan parse() {
    expect_keyword("SELECT");
    std::vector<SelectItem> items;
    items.push_back(parse_item());
    while (lex_.peek().kind == TokKind::comma) {
      lex_.take();
      items.push_back(parse_item());
    }
    expect_keyword("FROM");
    const Token table_tok = expect_name("table name");

    auto scan = std::make_unique<PlanNode>();
    scan->kind = PlanNode::Kind::scan;
    scan->table = table_tok.text;
    scan->pos = table_tok.pos;
    std::unique_ptr<PlanNode> input = std::move(scan);

    if (is_keyword("SEMANTIC")) {
      const Token sem = lex_.take();
      expect_keyword("JOIN");
      const Token right_tok = expect_name("table name");
      expect_keyword("ON");
      const Token left_col = expect_name("column name");
      expect(TokKind::tilde, "'~'");
      const Token right_col = expect_name("column name");

      auto right_scan = std::make_unique<PlanNode>();
      right_scan->kind = PlanNode::Kind::scan;
      right_scan->table = right_tok.text;
      right_scan->pos = right_tok.pos;

      auto join = std::make_unique<PlanNode>();
      join->kind = PlanNode::Kind::semantic_join;
      join->left_column = left_col.text;
      join->right_column = right_col.text;
      join->pos = sem.pos;
      join->children.push_back(std::move(input));
      join->children.push_back(std::move(right_scan));
      input = std::move(join);
    }

    if (is_keyword("WHERE")) {
      const Token where = lex_.take();
      auto filter = std::make_unique<PlanNode>();
      filter->kind = PlanNode::Kind::filter;
      filter->predicate = parse_predicate();
      filter->pos = where.pos;
      filter->children.push_back(std::move(input));
      input = std::move(filter);
    }

    if (lex_.peek().kind != TokKind::end)
      fail_expected({"end of query"});

    // Lift prompt items into PromptOp nodes, one per item, in item order.
    int prompt_count = 0;
    for (auto& item : items) {
      if (item.expr.kind != Expr::Kind::prompt) continue;
      ++prompt_count;
      if (item.name.empty()) item.name = "prompt_" + std::to_string(prompt_count);
      auto op = std::make_unique<PlanNode>();
      op->kind = PlanNode::Kind::prompt_op;
      op->prompt_template = std::move(item.expr.parts[0]);
      op->output_column = item.name;
      op->pos = item.expr.pos;
      op->children.push_back(std::move(input));
      input = std::move(op);
      // The projection now reads the generated column.
      Expr ref;
      ref.kind = Expr::Kind::column;
      ref.text = item.name;
      ref.pos = item.pos;
      item.expr = std::move(ref);
    }
    int unnamed = 0;
    for (auto& item : items) {
      ++unnamed;
      if (item.name.empty()) {
        if (item.expr.kind == Expr::Kind::column)
          item.name = item.expr.text;
        else
          item.name = "col" + std::to_string(unnamed);
      }
    }

    auto project = std::make_unique<PlanNode>();
    project->kind = PlanNode::Kind::project;
    project->items = std::move(items);
    project->pos = SourcePos{1, 1};
    project->children.push_back(std::move(input));

    QueryPlan plan;
    plan.root = std::move(project);
    return plan;
  }

 private:
  [[noreturn]] void fail_expected(std::vector<std::string> expected) {
    const Token& t = lex_.peek();
    std::ostringstream msg;
    msg << "syntax error at " << t.pos.line << ":" << t.pos.column << ": expected ";
    for (size_t i = 0; i < expected.size(); ++i) {
      if (i) msg << (i + 1 == expected.size() ? " or " : ", ");
      msg << expected[i];
    }
    msg << ", got ";
    if (t.kind == TokKind::end)
      msg << "end of input";
    else if (t.kind == TokKind::ident || t.kind == TokKind::string_lit)
      msg << "'" << t.text << "'";
    else if (t.kind == TokKind::int_lit || t.kind == TokKind::float_lit)
      msg << "'" << t.text << "'";
    else
      msg << "a symbol";
    throw ParseError(t.pos.line, t.pos.column, std::move(expected), msg.str());
  }

  bool is_keyword(const char* kw) {
    return lex_.peek().kind == TokKind::ident && upper(lex_.peek().text) == kw;
  }

  void expect_keyword(const char* kw) {
    if (!is_keyword(kw)) fail_expected({std::string(kw)});
    lex_.take();
  }

  Token expect(TokKind kind, const char* what) {
    if (lex_.peek().kind != kind) fail_expected({what});
    return lex_.take();
  }

  // Identifier that is not a keyword (table, column, alias).
  Token expect_name(const char* what) {
    if (lex_.peek().kind != TokKind::ident || is_reserved(lex_.peek().text))
      fail_expected({what});
    return lex_.take();
  }

  bool is_reserved(const std::string& ident) {
    static const char* kws[] = {"SELECT", "FROM", "WHERE", "AS", "SEMANTIC", "JOIN", "ON", "LIKE"};
    const std::string u = upper(ident);
    return std::any_of(std::begin(kws), std::end(kws), [&u](const char* k) { return u == k; });
  }

  SelectItem parse_item() {
    SelectItem item;
    item.pos = lex_.peek().pos;
    item.expr = parse_expr();
    if (is_keyword("AS")) {
      lex_.take();
      item.name = expect_name("alias").text;
    }
    return item;
  }

  Expr parse_expr() {
    const Token& t = lex_.peek();
    Expr e;
    e.pos = t.pos;
    switch (t.kind) {
      case TokKind::string_lit:
        e.kind = Expr::Kind::string_lit;
        e.text = lex_.take().text;
        return e;
      case TokKind::int_lit:
        e.kind = Expr::Kind::int_lit;
        e.int_value = lex_.take().int_value;
        return e;
      case TokKind::float_lit:
        e.kind = Expr::Kind::float_lit;
        e.float_value = lex_.take().float_value;
        return e;
      case TokKind::ident: {
        if (upper(t.text) == "PROMPT") {
          const Token head = lex_.take();
          expect(TokKind::lparen, "'('");
          Expr concat = parse_concat();
          expect(TokKind::rparen, "')'");
          e.kind = Expr::Kind::prompt;
          e.pos = head.pos;
          e.parts.push_back(std::move(concat));
          return e;
        }
        if (is_reserved(t.text)) fail_expected({"expression"});
        e.kind = Expr::Kind::column;
        e.text = lex_.take().text;
        return e;
      }
      default:
        fail_expected({"expression"});
    }
  }

  Expr parse_concat() {
    Expr first = parse_concat_operand();
    if (lex_.peek().kind != TokKind::concat) {
      Expr concat;
      concat.kind = Expr::Kind::concat;
      concat.pos = first.pos;
      concat.parts.push_back(std::move(first));
      return concat;
    }
    Expr concat;
    concat.kind = Expr::Kind::concat;
    concat.pos = first.pos;
    concat.parts.push_back(std::move(first));
    while (lex_.peek().kind == TokKind::concat) {
      lex_.take();
      concat.parts.push_back(parse_concat_operand());
    }
    return concat;
  }

  Expr parse_concat_operand() {
    Expr e = parse_expr();
    if (e.kind == Expr::Kind::prompt)
      throw ParseError(e.pos.line, e.pos.column, {"literal", "column"},
                       "syntax error at " + std::to_string(e.pos.line) + ":" +
                           std::to_string(e.pos.column) + ": prompt() cannot nest");
    return e;
  }

  Predicate parse_predicate() {
    Predicate p;
    const Token col = expect_name("column name");
    p.column = col.text;
    p.pos = col.pos;
    const Token& op = lex_.peek();
    switch (op.kind) {
      case TokKind::eq: p.op = Predicate::Op::eq; lex_.take(); break;
      case TokKind::ne: p.op = Predicate::Op::ne; lex_.take(); break;
      case TokKind::lt: p.op = Predicate::Op::lt; lex_.take(); break;
      case TokKind::gt: p.op = Predicate::Op::gt; lex_.take(); break;
      case TokKind::ident:
        if (upper(op.text) == "LIKE") {
          lex_.take();
          p.op = Predicate::Op::like;
          break;
        }
        fail_expected({"'='", "'<>'", "'<'", "'>'", "LIKE"});
      default:
        fail_expected({"'='", "'<>'", "'<'", "'>'", "LIKE"});
    }
    const Token& lit = lex_.peek();
    switch (lit.kind) {
      case TokKind::string_lit: {
        Token t = lex_.take();
        p.literal.kind = Expr::Kind::string_lit;
        p.literal.text = t.text;
        p.literal.pos = t.pos;
        break;
      }
      case TokKind::int_lit: {
        Token t = lex_.take();
        p.literal.kind = Expr::Kind::int_lit;
        p.literal.int_value = t.int_value;
        p.literal.pos = t.pos;
        break;
      }
      case TokKind::float_lit: {
        Token t = lex_.take();
        p.literal.kind = Expr::Kind::float_lit;
        p.literal.float_value = t.float_value;
        p.literal.pos = t.pos;
        break;
      }
      default:
        fail_expected({"literal"});
    }
    if (p.op == Predicate::Op::like) {
      if (p.literal.kind != Expr::Kind::string_lit)
        throw ParseError(p.literal.pos.line, p.literal.pos.column, {"string literal"},
                         "syntax error at " + std::to_string(p.literal.pos.line) + ":" +
                             std::to_string(p.literal.pos.column) +
                             ": LIKE needs a string pattern");
      const std::string& pat = p.literal.text;
      if (pat.empty() || pat.back() != '%' ||
          pat.find('%') != pat.size() - 1 || pat.find('_') != std::string::npos)
        throw ParseError(p.literal.pos.line, p.literal.pos.column, {"prefix% pattern"},
                         "syntax error at " + std::to_string(p.literal.pos.line) + ":" +
                             std::to_string(p.literal.pos.column) +
                             ": only prefix% LIKE patterns are supported");
    }
    return p;
  }

  Lexer lex_;
};

std::string sql_string(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "''";
    else out.push_back(c);
  }
  out.push_back('\'');
  return out;
}

std::string expr_to_sql(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::column: return e.text;
    case Expr::Kind::string_lit: return sql_string(e.text);
    case Expr::Kind::int_lit: return std::to_string(e.int_value);
    case Expr::Kind::float_lit: {
      std::string s = render_double(e.float_value);
      if (s.find('.') == std::string::npos && s.find('e') == std::string::npos) s += ".0";
      return s;
    }
    case Expr::Kind::concat: {
      std::string out;
      for (size_t i = 0; i < e.parts.size(); ++i) {
        if (i) out += " || ";
        out += expr_to_sql(e.parts[i]);
      }
      return out;
    }
    case Expr::Kind::prompt:
      return "prompt(" + expr_to_sql(e.parts[0]) + ")";
  }
  return {};
}

const char* predicate_op_sql(Predicate::Op op) {
  switch (op) {
    case Predicate::Op::eq: return "=";
    case Predicate::Op::ne: return "<>";
    case Predicate::Op::lt: return "<";
    case Predicate::Op::gt: return ">";
    case Predicate::Op::like: return "LIKE";
  }
  return "?";
}

nlohmann::ordered_json expr_to_json(const Expr& e) {
  nlohmann::ordered_json j;
  switch (e.kind) {
    case Expr::Kind::column: j["column"] = e.text; break;
    case Expr::Kind::string_lit: j["string"] = e.text; break;
    case Expr::Kind::int_lit: j["int"] = e.int_value; break;
    case Expr::Kind::float_lit: j["float"] = e.float_value; break;
    case Expr::Kind::concat: {
      auto arr = nlohmann::ordered_json::array();
      for (const auto& p : e.parts) arr.push_back(expr_to_json(p));
      j["concat"] = std::move(arr);
      break;
    }
    case Expr::Kind::prompt: j["prompt"] = expr_to_json(e.parts[0]); break;
  }
  return j;
}

nlohmann::ordered_json node_to_json(const PlanNode& n) {
  nlohmann::ordered_json j;
  switch (n.kind) {
    case PlanNode::Kind::scan:
      j["op"] = "scan";
      j["table"] = n.table;
      break;
    case PlanNode::Kind::semantic_join:
      j["op"] = "semantic_join";
      j["left_column"] = n.left_column;
      j["right_column"] = n.right_column;
      break;
    case PlanNode::Kind::filter:
      j["op"] = "filter";
      j["column"] = n.predicate.column;
      j["cmp"] = predicate_op_sql(n.predicate.op);
      j["literal"] = expr_to_json(n.predicate.literal);
      break;
    case PlanNode::Kind::prompt_op:
      j["op"] = "prompt_op";
      j["template"] = expr_to_json(n.prompt_template);
      j["output"] = n.output_column;
      break;
    case PlanNode::Kind::project: {
      j["op"] = "project";
      auto items = nlohmann::ordered_json::array();
      for (const auto& item : n.items) {
        nlohmann::ordered_json it;
        it["expr"] = expr_to_json(item.expr);
        it["name"] = item.name;
        items.push_back(std::move(it));
      }
      j["items"] = std::move(items);
      break;
    }
  }
  if (!n.children.empty()) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& c : n.children) arr.push_back(node_to_json(*c));
    j["inputs"] = std::move(arr);
  }
  return j;
}

// Walks down to the join/scan + filter + prompt ops for printing.
struct PlanParts {
  const PlanNode* project = nullptr;
  std::vector<const PlanNode*> prompt_ops;  // outermost first
  const PlanNode* filter = nullptr;
  const PlanNode* join = nullptr;
  const PlanNode* scan = nullptr;
};

PlanParts decompose(const QueryPlan& plan) {
  PlanParts parts;
  const PlanNode* n = plan.root.get();
  if (!n || n->kind != PlanNode::Kind::project)
    throw ContractViolation("plan: root must be a projection");
  parts.project = n;
  n = n->children.at(0).get();
  while (n->kind == PlanNode::Kind::prompt_op) {
    parts.prompt_ops.push_back(n);
    n = n->children.at(0).get();
  }
  if (n->kind == PlanNode::Kind::filter) {
    parts.filter = n;
    n = n->children.at(0).get();
  }
  if (n->kind == PlanNode::Kind::semantic_join) {
    parts.join = n;
    parts.scan = n->children.at(0).get();
  } else {
    parts.scan = n;
  }
  return parts;
}

}  // namespace

QueryPlan parse_query(const std::string& sql) {
  Parser parser(sql);
  return parser.parse();
}

std::string pretty_print(const QueryPlan& plan) {
  const PlanParts parts = decompose(plan);
  // Prompt columns print as their original prompt(...) expression.
  std::ostringstream out;
  out << "SELECT ";
  bool first = true;
  for (const auto& item : parts.project->items) {
    if (!first) out << ", ";
    first = false;
    const PlanNode* source = nullptr;
    if (item.expr.kind == Expr::Kind::column) {
      for (const PlanNode* op : parts.prompt_ops)
        if (op->output_column == item.expr.text) source = op;
    }
    if (source) {
      Expr prompt;
      prompt.kind = Expr::Kind::prompt;
      prompt.parts.push_back(source->prompt_template);
      out << expr_to_sql(prompt);
    } else {
      out << expr_to_sql(item.expr);
    }
    out << " AS " << item.name;
  }
  out << " FROM " << parts.scan->table;
  if (parts.join) {
    out << " SEMANTIC JOIN " << parts.join->children.at(1)->table << " ON "
        << parts.join->left_column << " ~ " << parts.join->right_column;
  }
  if (parts.filter) {
    out << " WHERE " << parts.filter->predicate.column << " "
        << predicate_op_sql(parts.filter->predicate.op) << " "
        << expr_to_sql(parts.filter->predicate.literal);
  }
  return out.str();
}

nlohmann::ordered_json plan_to_json(const QueryPlan& plan) {
  if (!plan.root) throw ContractViolation("plan_to_json: empty plan");
  return node_to_json(*plan.root);
}

bool plan_equal(const QueryPlan& a, const QueryPlan& b) {
  return plan_to_json(a) == plan_to_json(b);
}

std::string expr_canonical(const Expr& e) { return expr_to_sql(e); }

}  // namespace iolm
