// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace iolm {

enum class ColumnType { text, integer, real };

const char* column_type_name(ColumnType t);

// Columnar storage; exactly one value vector is active per column type.
struct Column {
  std::string name;
  ColumnType type = ColumnType::text;
  std::vector<std::string> texts;
  std::vector<int64_t> ints;
  std::vector<double> reals;

  size_t size() const;
};

struct Table {
  std::string name;
  std::vector<Column> columns;
  size_t row_count = 0;

  int column_index(const std::string& col_name) const;  // -1 when absent
  const Column& column(const std::string& col_name) const;  // throws

  // Canonical text rendering: text verbatim, integers as decimal digits,
  // reals in shortest round-trip form.
  std::string value_as_text(const Column& col, size_t row) const;

  void check_consistent() const;  // all columns equal length == row_count
};

std::string render_double(double v);  // shortest round-trip form

// File ingestion. CSV follows RFC 4180 (quoted fields, doubled quotes,
// newlines inside quotes); JSONL is one flat object per line with the first
// line fixing column order. Schema inference promotes int -> real -> text
// per column. Non-ASCII text and ragged/malformed rows raise IngestError
// with 1-based row numbers.
Table ingest_csv(const std::string& path, const std::string& table_name);
Table ingest_jsonl(const std::string& path, const std::string& table_name);
Table ingest(const std::string& path, const std::string& table_name);  // by extension

void write_csv(const Table& table, const std::string& path);
std::string table_to_csv(const Table& table);

}  // namespace iolm
