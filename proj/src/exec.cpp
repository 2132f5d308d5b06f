// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#include "iolm/exec.hpp"

#include <algorithm>
#include <cctype>

#include "iolm/common.hpp"
#include "iolm/tasks.hpp"

namespace iolm {

std::optional<std::string> PromptCache::lookup(const Key& key) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = index_.find(key);
  if (it == index_.end()) {
    ++misses_;
    return std::nullopt;
  }
  ++hits_;
  lru_.splice(lru_.begin(), lru_, it->second);  // refresh recency
  return it->second->value;
}

void PromptCache::insert(const Key& key, const std::string& value) {
  if (capacity_ == 0) return;
  std::lock_guard<std::mutex> lock(mu_);
  auto it = index_.find(key);
  if (it != index_.end()) {
    it->second->value = value;
    lru_.splice(lru_.begin(), lru_, it->second);
    return;
  }
  lru_.push_front(Entry{key, value});
  index_[key] = lru_.begin();
  if (lru_.size() > capacity_) {
    index_.erase(lru_.back().key);
    lru_.pop_back();
  }
}

size_t PromptCache::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return lru_.size();
}

std::string engine_normalize(const std::string& s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(std::tolower(u)));
    } else {
      pending_space = true;
    }
  }
  return out;
}

bool blocking_pass(const std::string& a, const std::string& b) {
  const std::string na = engine_normalize(a);
  const std::string nb = engine_normalize(b);
  const char fa = na.empty() ? '\0' : na[0];
  const char fb = nb.empty() ? '\0' : nb[0];
  if (fa == fb) return true;
  const auto la = static_cast<long>(na.size());
  const auto lb = static_cast<long>(nb.size());
  return std::labs(la - lb) <= 2;
}

std::string semantic_match_prompt(const std::string& a, const std::string& b) {
  return render_match_prompt(a, b);
}

namespace {

// Deduplicating batch resolver: each distinct rendered prompt is decoded at
// most once per flush window, and cached results short-circuit the model
// entirely. Outputs are aligned to the input order.
class PromptResolver {
 public:
  PromptResolver(const ModelRuntime& model, PromptCache& cache, int batch_size,
                 int max_new_tokens, ExecStats& stats, FlopCounter& counter)
      : model_(model),
        cache_(cache),
        batch_size_(std::max(1, batch_size)),
        max_new_tokens_(max_new_tokens),
        stats_(stats),
        counter_(counter) {}

  std::vector<std::string> resolve(const std::vector<std::string>& prompts) {
    outputs_.assign(prompts.size(), {});
    pending_prompts_.clear();
    pending_rows_.clear();
    pending_index_.clear();
    for (size_t row = 0; row < prompts.size(); ++row) {
      const std::string& prompt = prompts[row];
      if (cache_.enabled()) {
        if (auto hit = cache_.lookup(make_key(prompt))) {
          ++stats_.cache_hits;
          outputs_[row] = *hit;
          continue;
        }
        ++stats_.cache_misses;
      }
      auto it = pending_index_.find(prompt);
      if (it != pending_index_.end()) {
        pending_rows_[it->second].push_back(row);
        continue;
      }
      pending_index_[prompt] = pending_prompts_.size();
      pending_prompts_.push_back(prompt);
      pending_rows_.push_back({row});
      if (static_cast<int>(pending_prompts_.size()) == batch_size_) flush();
    }
    flush();
    return std::move(outputs_);
  }

 private:
  PromptCache::Key make_key(const std::string& prompt) const {
    return {model_.bundle_hash(), max_new_tokens_, prompt};
  }

  void flush() {
    if (pending_prompts_.empty()) return;
    std::vector<std::string> decoded;
    try {
      decoded = model_.batch_decode(pending_prompts_, max_new_tokens_, counter_);
    } catch (const SequenceTooLong& e) {
      throw SequenceTooLong(std::string(e.what()) + " (row " +
                            std::to_string(pending_rows_.front().front()) + ")");
    }
    stats_.model_invocations += pending_prompts_.size();
    for (size_t i = 0; i < pending_prompts_.size(); ++i) {
      cache_.insert(make_key(pending_prompts_[i]), decoded[i]);
      for (size_t row : pending_rows_[i]) outputs_[row] = decoded[i];
    }
    pending_prompts_.clear();
    pending_rows_.clear();
    pending_index_.clear();
  }

  const ModelRuntime& model_;
  PromptCache& cache_;
  int batch_size_;
  int max_new_tokens_;
  ExecStats& stats_;
  FlopCounter& counter_;

  std::vector<std::string> outputs_;
  std::vector<std::string> pending_prompts_;
  std::vector<std::vector<size_t>> pending_rows_;
  std::map<std::string, size_t> pending_index_;
};

struct ExecContext {
  const std::map<std::string, Table>& tables;
  const ModelRuntime& model;
  PromptCache& cache;
  const ExecOptions& options;
  ExecStats& stats;
  FlopCounter& counter;
};

std::string render_template(const Expr& e, const Table& t, size_t row) {
  switch (e.kind) {
    case Expr::Kind::string_lit:
      return e.text;
    case Expr::Kind::int_lit:
      return std::to_string(e.int_value);
    case Expr::Kind::float_lit:
      return render_double(e.float_value);
    case Expr::Kind::column:
      return t.value_as_text(t.column(e.text), row);
    case Expr::Kind::concat: {
      std::string out;
      for (const auto& part : e.parts) out += render_template(part, t, row);
      return out;
    }
    case Expr::Kind::prompt:
      throw ContractViolation("render_template: nested prompt");
  }
  return {};
}

void bind_template(const Expr& e, const Table& t) {
  if (e.kind == Expr::Kind::column) {
    t.column(e.text);  // throws when unresolved
    return;
  }
  for (const auto& part : e.parts) bind_template(part, t);
}

Table filter_table_impl(const Table& in, const Predicate& pred) {
  const Column& col = in.column(pred.column);

  // Type checks up front.
  if (pred.op == Predicate::Op::like) {
    if (col.type != ColumnType::text)
      throw ContractViolation("LIKE requires a text column, '" + pred.column + "' is " +
                              column_type_name(col.type));
  } else if (col.type == ColumnType::text) {
    if (pred.literal.kind != Expr::Kind::string_lit)
      throw ContractViolation("column '" + pred.column + "' is text but the literal is numeric");
  } else {
    if (pred.literal.kind == Expr::Kind::string_lit)
      throw ContractViolation("column '" + pred.column + "' is numeric but the literal is a string");
  }

  auto keep_row = [&](size_t r) {
    if (col.type == ColumnType::text) {
      const std::string& v = col.texts[r];
      if (pred.op == Predicate::Op::like) {
        const std::string prefix = pred.literal.text.substr(0, pred.literal.text.size() - 1);
        return v.size() >= prefix.size() && v.compare(0, prefix.size(), prefix) == 0;
      }
      const std::string& lit = pred.literal.text;
      switch (pred.op) {
        case Predicate::Op::eq: return v == lit;
        case Predicate::Op::ne: return v != lit;
        case Predicate::Op::lt: return v < lit;
        case Predicate::Op::gt: return v > lit;
        default: return false;
      }
    }
    const double v = col.type == ColumnType::integer ? static_cast<double>(col.ints[r])
                                                     : col.reals[r];
    const double lit = pred.literal.kind == Expr::Kind::int_lit
                           ? static_cast<double>(pred.literal.int_value)
                           : pred.literal.float_value;
    switch (pred.op) {
      case Predicate::Op::eq: return v == lit;
      case Predicate::Op::ne: return v != lit;
      case Predicate::Op::lt: return v < lit;
      case Predicate::Op::gt: return v > lit;
      default: return false;
    }
  };

  Table out;
  out.name = in.name;
  for (const auto& c : in.columns) {
    Column nc;
    nc.name = c.name;
    nc.type = c.type;
    out.columns.push_back(std::move(nc));
  }
  for (size_t r = 0; r < in.row_count; ++r) {
    if (!keep_row(r)) continue;
    ++out.row_count;
    for (size_t c = 0; c < in.columns.size(); ++c) {
      const Column& src = in.columns[c];
      Column& dst = out.columns[c];
      switch (src.type) {
        case ColumnType::text: dst.texts.push_back(src.texts[r]); break;
        case ColumnType::integer: dst.ints.push_back(src.ints[r]); break;
        case ColumnType::real: dst.reals.push_back(src.reals[r]); break;
      }
    }
  }
  return out;
}

void append_row(Table& dst, const Table& src, size_t row, size_t col_offset) {
  for (size_t c = 0; c < src.columns.size(); ++c) {
    const Column& s = src.columns[c];
    Column& d = dst.columns[col_offset + c];
    switch (s.type) {
      case ColumnType::text: d.texts.push_back(s.texts[row]); break;
      case ColumnType::integer: d.ints.push_back(s.ints[row]); break;
      case ColumnType::real: d.reals.push_back(s.reals[row]); break;
    }
  }
}

Table run_node(const PlanNode& node, ExecContext& ctx);

Table run_semantic_join(const PlanNode& node, ExecContext& ctx) {
  const Table left = run_node(*node.children.at(0), ctx);
  const Table right = run_node(*node.children.at(1), ctx);
  const Column& lcol = left.column(node.left_column);
  const Column& rcol = right.column(node.right_column);
  if (lcol.type != ColumnType::text || rcol.type != ColumnType::text)
    throw ContractViolation("semantic join columns must be text ('" + node.left_column + "' ~ '" +
                            node.right_column + "')");

  // Output schema: left columns, then right columns (renamed on collision).
  Table out;
  out.name = left.name + "_join_" + right.name;
  for (const auto& c : left.columns) {
    Column nc;
    nc.name = c.name;
    nc.type = c.type;
    out.columns.push_back(std::move(nc));
  }
  for (const auto& c : right.columns) {
    Column nc;
    nc.name = out.column_index(c.name) >= 0 ? right.name + "." + c.name : c.name;
    nc.type = c.type;
    out.columns.push_back(std::move(nc));
  }

  // Candidate pairs after blocking, in deterministic (left, right) order.
  std::vector<std::pair<size_t, size_t>> candidates;
  for (size_t i = 0; i < left.row_count; ++i)
    for (size_t j = 0; j < right.row_count; ++j)
      if (blocking_pass(lcol.texts[i], rcol.texts[j])) candidates.emplace_back(i, j);
  ctx.stats.join_pairs_considered += candidates.size();

  std::vector<std::string> prompts;
  prompts.reserve(candidates.size());
  for (const auto& [i, j] : candidates)
    prompts.push_back(semantic_match_prompt(lcol.texts[i], rcol.texts[j]));

  PromptResolver resolver(ctx.model, ctx.cache, ctx.options.batch_size, 1, ctx.stats,
                          ctx.counter);
  const auto answers = resolver.resolve(prompts);

  for (size_t k = 0; k < candidates.size(); ++k) {
    const std::string& ans = answers[k];
    const char first = ans.empty() ? '\0' : ans[0];
    if (first != 'y' && first != 'n') ++ctx.stats.unparsable_match_answers;
    if (first != 'y') continue;
    ++ctx.stats.join_matches;
    ++out.row_count;
    append_row(out, left, candidates[k].first, 0);
    append_row(out, right, candidates[k].second, left.columns.size());
  }
  out.check_consistent();
  return out;
}

Table run_node(const PlanNode& node, ExecContext& ctx) {
  switch (node.kind) {
    case PlanNode::Kind::scan: {
      auto it = ctx.tables.find(node.table);
      if (it == ctx.tables.end())
        throw ContractViolation("unknown table '" + node.table + "'");
      ctx.stats.rows_in += it->second.row_count;
      return it->second;
    }
    case PlanNode::Kind::filter: {
      Table in = run_node(*node.children.at(0), ctx);
      return filter_rows(in, node.predicate);
    }
    case PlanNode::Kind::semantic_join:
      return run_semantic_join(node, ctx);
    case PlanNode::Kind::prompt_op: {
      Table in = run_node(*node.children.at(0), ctx);
      bind_template(node.prompt_template, in);
      std::vector<std::string> prompts;
      prompts.reserve(in.row_count);
      for (size_t r = 0; r < in.row_count; ++r)
        prompts.push_back(render_template(node.prompt_template, in, r));
      PromptResolver resolver(ctx.model, ctx.cache, ctx.options.batch_size,
                              ctx.options.max_new_tokens, ctx.stats, ctx.counter);
      auto outputs = resolver.resolve(prompts);
      Column result;
      result.name = node.output_column;
      result.type = ColumnType::text;
      result.texts = std::move(outputs);
      in.columns.push_back(std::move(result));
      in.check_consistent();
      return in;
    }
    case PlanNode::Kind::project: {
      Table in = run_node(*node.children.at(0), ctx);
      Table out;
      out.name = in.name;
      out.row_count = in.row_count;
      for (const auto& item : node.items) {
        Column col;
        col.name = item.name;
        switch (item.expr.kind) {
          case Expr::Kind::column: {
            const Column& src = in.column(item.expr.text);
            col = src;
            col.name = item.name;
            break;
          }
          case Expr::Kind::string_lit:
            col.type = ColumnType::text;
            col.texts.assign(in.row_count, item.expr.text);
            break;
          case Expr::Kind::int_lit:
            col.type = ColumnType::integer;
            col.ints.assign(in.row_count, item.expr.int_value);
            break;
          case Expr::Kind::float_lit:
            col.type = ColumnType::real;
            col.reals.assign(in.row_count, item.expr.float_value);
            break;
          default:
            throw ContractViolation("project: unsupported expression");
        }
        out.columns.push_back(std::move(col));
      }
      out.check_consistent();
      ctx.stats.rows_out = out.row_count;
      return out;
    }
  }
  throw ContractViolation("run_node: unknown operator");
}

}  // namespace

Table filter_rows(const Table& in, const Predicate& pred) { return filter_table_impl(in, pred); }

Table execute(const QueryPlan& plan, const std::map<std::string, Table>& tables,
              const ModelRuntime& model, PromptCache& cache, const ExecOptions& options,
              ExecStats& stats, FlopCounter& counter) {
  if (!plan.root) throw ContractViolation("execute: empty plan");
  ExecContext ctx{tables, model, cache, options, stats, counter};
  return run_node(*plan.root, ctx);
}

}  // namespace iolm
