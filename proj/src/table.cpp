// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#include "iolm/table.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "iolm/common.hpp"

namespace iolm {

const char* column_type_name(ColumnType t) {
  switch (t) {
    case ColumnType::text: return "text";
    case ColumnType::integer: return "int";
    case ColumnType::real: return "float";
  }
  return "?";
}

size_t Column::size() const {
  switch (type) {
    case ColumnType::text: return texts.size();
    case ColumnType::integer: return ints.size();
    case ColumnType::real: return reals.size();
  }
  return 0;
}

int Table::column_index(const std::string& col_name) const {
  for (size_t i = 0; i < columns.size(); ++i)
    if (columns[i].name == col_name) return static_cast<int>(i);
  return -1;
}

const Column& Table::column(const std::string& col_name) const {
  const int idx = column_index(col_name);
  if (idx < 0)
    throw ContractViolation("table '" + name + "' has no column '" + col_name + "'");
  return columns[idx];
}

std::string render_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string Table::value_as_text(const Column& col, size_t row) const {
  switch (col.type) {
    case ColumnType::text: return col.texts[row];
    case ColumnType::integer: return std::to_string(col.ints[row]);
    case ColumnType::real: return render_double(col.reals[row]);
  }
  return {};
}

void Table::check_consistent() const {
  for (const auto& col : columns)
    if (col.size() != row_count)
      throw ContractViolation("table '" + name + "': column '" + col.name + "' has " +
                              std::to_string(col.size()) + " values, expected " +
                              std::to_string(row_count));
}

namespace {

void check_ascii(const std::string& value, int row, const std::string& col) {
  for (char ch : value)
    if (static_cast<unsigned char>(ch) > 127)
      throw IngestError(row, "non-ASCII text at row " + std::to_string(row) + ", column '" +
                                 col + "'");
}

bool parse_int(const std::string& s, int64_t& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last;
}

bool parse_real(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

// Raw CSV records, RFC 4180: quoted fields may contain commas, newlines and
// doubled quotes.
std::vector<std::vector<std::string>> parse_csv_records(const std::string& content) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  int line = 1;

  size_t i = 0;
  auto end_field = [&] {
    record.push_back(field);
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    records.push_back(record);
    record.clear();
  };
  while (i < content.size()) {
    const char c = content[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field.push_back('"');
          i += 2;
          continue;
        }
        in_quotes = false;
        ++i;
        continue;
      }
      if (c == '\n') ++line;
      field.push_back(c);
      ++i;
      continue;
    }
    switch (c) {
      case '"':
        if (field_started && !field.empty())
          throw IngestError(line, "line " + std::to_string(line) + ": quote inside unquoted field");
        in_quotes = true;
        field_started = true;
        ++i;
        break;
      case ',':
        end_field();
        ++i;
        break;
      case '\r':
        if (i + 1 < content.size() && content[i + 1] == '\n') {
          end_record();
          ++line;
          i += 2;
        } else {
          field.push_back(c);
          ++i;
        }
        break;
      case '\n':
        end_record();
        ++line;
        ++i;
        break;
      default:
        field.push_back(c);
        field_started = true;
        ++i;
        break;
    }
  }
  if (in_quotes) throw IngestError(line, "unterminated quoted field at end of file");
  if (!field.empty() || !record.empty()) end_record();
  return records;
}

Table build_table(const std::string& table_name, std::vector<std::string> col_names,
                  const std::vector<std::vector<std::string>>& rows) {
  Table t;
  t.name = table_name;
  t.row_count = rows.size();

  const size_t n_cols = col_names.size();
  for (size_t c = 0; c < n_cols; ++c) {
    Column col;
    col.name = std::move(col_names[c]);

    // Infer the narrowest type all values satisfy: int < real < text.
    ColumnType type = ColumnType::integer;
    int64_t iv;
    double rv;
    for (size_t r = 0; r < rows.size() && type != ColumnType::text; ++r) {
      const std::string& raw = rows[r][c];
      if (type == ColumnType::integer && !parse_int(raw, iv))
        type = ColumnType::real;
      if (type == ColumnType::real && !parse_real(raw, rv))
        type = ColumnType::text;
    }
    if (rows.empty()) type = ColumnType::text;

    col.type = type;
    for (size_t r = 0; r < rows.size(); ++r) {
      const std::string& raw = rows[r][c];
      switch (type) {
        case ColumnType::integer:
          parse_int(raw, iv);
          col.ints.push_back(iv);
          break;
        case ColumnType::real:
          parse_real(raw, rv);
          col.reals.push_back(rv);
          break;
        case ColumnType::text:
          check_ascii(raw, static_cast<int>(r + 1), col.name);
          col.texts.push_back(raw);
          break;
      }
    }
    t.columns.push_back(std::move(col));
  }
  t.check_consistent();
  return t;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("ingest: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Table ingest_csv(const std::string& path, const std::string& table_name) {
  const auto records = parse_csv_records(read_file(path));
  if (records.empty()) throw IngestError(0, "csv file has no header row: " + path);
  const auto& header = records.front();
  for (const auto& h : header) check_ascii(h, 0, h);

  std::vector<std::vector<std::string>> rows(records.begin() + 1, records.end());
  for (size_t r = 0; r < rows.size(); ++r)
    if (rows[r].size() != header.size())
      throw IngestError(static_cast<int>(r + 2),
                        "row " + std::to_string(r + 2) + " has " + std::to_string(rows[r].size()) +
                            " fields, expected " + std::to_string(header.size()));
  return build_table(table_name, header, rows);
}

Table ingest_jsonl(const std::string& path, const std::string& table_name) {
  std::ifstream in(path);
  if (!in) throw Error("ingest: cannot open " + path);

  std::vector<std::string> col_names;
  std::vector<std::vector<std::string>> rows;       // canonical text of each value
  std::vector<std::vector<int>> kinds;              // 0 int, 1 real, 2 text per cell
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::ordered_json obj;
    try {
      obj = nlohmann::ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IngestError(line_no, "row " + std::to_string(line_no) + ": invalid JSON: " + e.what());
    }
    if (!obj.is_object())
      throw IngestError(line_no, "row " + std::to_string(line_no) + ": not a JSON object");
    if (col_names.empty()) {
      for (const auto& [key, _] : obj.items()) col_names.push_back(key);
      if (col_names.empty())
        throw IngestError(line_no, "row " + std::to_string(line_no) + ": empty object");
    }
    std::vector<std::string> row;
    std::vector<int> kind_row;
    if (obj.size() != col_names.size())
      throw IngestError(line_no, "row " + std::to_string(line_no) + ": expected " +
                                     std::to_string(col_names.size()) + " fields, got " +
                                     std::to_string(obj.size()));
    for (const auto& key : col_names) {
      if (!obj.contains(key))
        throw IngestError(line_no,
                          "row " + std::to_string(line_no) + ": missing field '" + key + "'");
      const auto& v = obj[key];
      if (v.is_string()) {
        check_ascii(v.get<std::string>(), line_no, key);
        row.push_back(v.get<std::string>());
        kind_row.push_back(2);
      } else if (v.is_number_integer() || v.is_number_unsigned()) {
        row.push_back(std::to_string(v.get<int64_t>()));
        kind_row.push_back(0);
      } else if (v.is_number_float()) {
        row.push_back(render_double(v.get<double>()));
        kind_row.push_back(1);
      } else {
        throw IngestError(line_no, "row " + std::to_string(line_no) + ": field '" + key +
                                       "' has unsupported type (" + std::string(v.type_name()) +
                                       ")");
      }
    }
    rows.push_back(std::move(row));
    kinds.push_back(std::move(kind_row));
  }
  if (rows.empty()) throw IngestError(0, "jsonl file has no rows: " + path);

  // Promotion across rows: a column with any text cell is text even if
  // its other values look numeric.
  Table t = build_table(table_name, col_names, rows);
  for (size_t c = 0; c < t.columns.size(); ++c) {
    bool any_text = false, any_real = false;
    for (const auto& kind_row : kinds) {
      any_text = any_text || kind_row[c] == 2;
      any_real = any_real || kind_row[c] == 1;
    }
    const ColumnType want =
        any_text ? ColumnType::text : (any_real ? ColumnType::real : ColumnType::integer);
    if (want != t.columns[c].type) {
      Column col;
      col.name = t.columns[c].name;
      col.type = want;
      for (size_t r = 0; r < rows.size(); ++r) {
        if (want == ColumnType::text) {
          col.texts.push_back(rows[r][c]);
        } else {
          double rv = 0.0;
          parse_real(rows[r][c], rv);
          col.reals.push_back(rv);
        }
      }
      t.columns[c] = std::move(col);
    }
  }
  t.check_consistent();
  return t;
}

Table ingest(const std::string& path, const std::string& table_name) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv")
    return ingest_csv(path, table_name);
  if (path.size() >= 6 && path.substr(path.size() - 6) == ".jsonl")
    return ingest_jsonl(path, table_name);
  throw ContractViolation("ingest: cannot tell format of '" + path +
                          "' (expected .csv or .jsonl)");
}

namespace {

std::string csv_escape(const std::string& s) {
  const bool needs_quotes = s.find_first_of(",\"\r\n") != std::string::npos;
  if (!needs_quotes) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

std::string table_to_csv(const Table& table) {
  std::ostringstream out;
  for (size_t c = 0; c < table.columns.size(); ++c) {
    if (c) out << ',';
    out << csv_escape(table.columns[c].name);
  }
  out << '\n';
  for (size_t r = 0; r < table.row_count; ++r) {
    for (size_t c = 0; c < table.columns.size(); ++c) {
      if (c) out << ',';
      out << csv_escape(table.value_as_text(table.columns[c], r));
    }
    out << '\n';
  }
  return out.str();
}

void write_csv(const Table& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("write_csv: cannot open " + path);
  out << table_to_csv(table);
}

}  // namespace iolm
