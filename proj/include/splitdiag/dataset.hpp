#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Core>
#include <fmt/format.h>

#include "splitdiag/error.hpp"

namespace splitdiag {

enum class ColumnKind { numeric, categorical };

struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  /// Index into the numeric block or the categorical store, depending on kind.
  std::size_t slot = 0;
};

/// Immutable table of numeric and categorical columns. Numeric values are
/// stored row-major; categorical cells are stored as level codes.
class Dataset {
 public:
  struct Categorical {
    std::vector<std::string> levels;
    std::vector<std::int32_t> codes;
  };

  Dataset(std::string name, std::vector<Column> columns, std::size_t rows,
          std::vector<double> numeric, std::vector<Categorical> categorical,
          std::size_t dropped_rows = 0)
      : name_(std::move(name)),
        columns_(std::move(columns)),
        rows_(rows),
        numeric_(std::move(numeric)),
        categorical_(std::move(categorical)),
        dropped_rows_(dropped_rows) {
    if (rows_ < 2) throw Error(fmt::format("dataset '{}' needs at least 2 rows, has {}", name_, rows_));
    std::size_t numeric_cols = 0;
    for (const auto& c : columns_) {
      if (!index_.emplace(c.name, &c - columns_.data()).second)
        throw Error(fmt::format("duplicate column name '{}'", c.name));
      if (c.kind == ColumnKind::numeric) ++numeric_cols;
    }
    numeric_cols_ = numeric_cols;
    if (numeric_.size() != rows_ * numeric_cols_) throw Error("numeric block size does not match shape");
    for (double v : numeric_)
      if (!std::isfinite(v)) throw Error("dataset contains a non-finite numeric value");
    for (const auto& cat : categorical_)
      if (cat.codes.size() != rows_) throw Error("categorical column length does not match row count");
  }

  const std::string& name() const noexcept { return name_; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t numeric_columns() const noexcept { return numeric_cols_; }
  std::span<const Column> columns() const noexcept { return columns_; }
  std::size_t dropped_rows() const noexcept { return dropped_rows_; }

  const Column* find(std::string_view name) const {
    const auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : &columns_[it->second];
  }

  const Column& column(std::string_view name) const {
    const Column* c = find(name);
    if (c == nullptr) throw Error(fmt::format("unknown column '{}'", name));
    return *c;
  }

  const Column& numeric_column(std::string_view name) const {
    const Column& c = column(name);
    if (c.kind != ColumnKind::numeric) throw Error(fmt::format("column '{}' is categorical, expected numeric", name));
    return c;
  }

  double value(std::size_t row, const Column& c) const {
    return numeric_[row * numeric_cols_ + c.slot];
  }

  const Categorical& categorical(const Column& c) const {
    if (c.kind != ColumnKind::categorical) throw Error(fmt::format("column '{}' is numeric", c.name));
    return categorical_[c.slot];
  }

  /// Rendering of one cell as text; numeric values use a round-trip representation.
  std::string cell_text(std::size_t row, const Column& c) const {
    if (c.kind == ColumnKind::numeric) return fmt::format("{}", value(row, c));
    const auto& cat = categorical_[c.slot];
    return cat.levels[static_cast<std::size_t>(cat.codes[row])];
  }

 private:
  std::string name_;
  std::vector<Column> columns_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t rows_ = 0;
  std::size_t numeric_cols_ = 0;
  std::vector<double> numeric_;
  std::vector<Categorical> categorical_;
  std::size_t dropped_rows_ = 0;
};

// ---------------------------------------------------------------------------
// Derived columns: "a:b" is the row-wise product, "a^k" the k-th power.

struct Factor {
  std::string column;
  int power = 1;

  friend bool operator==(const Factor&, const Factor&) = default;
};

struct Term {
  std::vector<Factor> factors;

  std::string label() const {
    std::string out;
    for (std::size_t i = 0; i < factors.size(); ++i) {
      if (i > 0) out += ':';
      out += factors[i].column;
      if (factors[i].power != 1) out += fmt::format("^{}", factors[i].power);
    }
    return out;
  }

  friend bool operator==(const Term&, const Term&) = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_on(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

}  // namespace detail

inline Term parse_term(std::string_view text) {
  const auto body = detail::trim(text);
  if (body.empty()) throw Error("empty term");
  Term term;
  for (auto part : detail::split_on(body, ':')) {
    part = detail::trim(part);
    Factor f;
    const auto caret = part.find('^');
    if (caret == std::string_view::npos) {
      f.column = std::string(part);
    } else {
      f.column = std::string(detail::trim(part.substr(0, caret)));
      const auto exp = detail::trim(part.substr(caret + 1));
      int k = 0;
      const auto [ptr, ec] = std::from_chars(exp.data(), exp.data() + exp.size(), k);
      if (ec != std::errc{} || ptr != exp.data() + exp.size())
        throw Error(fmt::format("bad exponent in term '{}'", body));
      if (k < 1) throw Error(fmt::format("exponent must be >= 1 in term '{}'", body));
      f.power = k;
    }
    if (f.column.empty()) throw Error(fmt::format("empty column name in term '{}'", body));
    term.factors.push_back(std::move(f));
  }
  return term;
}

inline double evaluate(const Dataset& ds, const std::vector<const Column*>& cols, const Term& term,
                       std::size_t row) {
  double v = 1.0;
  for (std::size_t i = 0; i < term.factors.size(); ++i) {
    const double x = ds.value(row, *cols[i]);
    for (int p = 0; p < term.factors[i].power; ++p) v *= x;
  }
  return v;
}

inline std::vector<const Column*> resolve(const Dataset& ds, const Term& term) {
  std::vector<const Column*> cols;
  cols.reserve(term.factors.size());
  for (const auto& f : term.factors) cols.push_back(&ds.numeric_column(f.column));
  return cols;
}

// ---------------------------------------------------------------------------

/// Ordered set of (possibly derived) numeric columns entering the distance metric.
struct ColumnSelection {
  std::vector<Term> selected;

  std::size_t dim() const noexcept { return selected.size(); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& t : selected) out.push_back(t.label());
    return out;
  }
};

inline ColumnSelection make_selection(const Dataset& ds, std::vector<Term> terms) {
  if (terms.empty()) throw Error("column selection is empty");
  std::unordered_set<std::string> seen;
  for (const auto& t : terms) {
    resolve(ds, t);
    if (!seen.insert(t.label()).second) throw Error(fmt::format("column '{}' selected twice", t.label()));
  }
  return ColumnSelection{std::move(terms)};
}

/// All numeric columns in dataset order when `names` is empty, otherwise the
/// requested (possibly derived) columns in the given order.
inline ColumnSelection select_columns(const Dataset& ds, const std::optional<std::vector<std::string>>& names = {}) {
  std::vector<Term> terms;
  if (!names || names->empty()) {
    for (const auto& c : ds.columns())
      if (c.kind == ColumnKind::numeric) terms.push_back(Term{{Factor{c.name, 1}}});
    if (terms.empty()) throw Error(fmt::format("dataset '{}' has no numeric columns", ds.name()));
  } else {
    for (const auto& n : *names) terms.push_back(parse_term(n));
  }
  return make_selection(ds, std::move(terms));
}

/// Copy of the selected columns for the given rows, in row order.
inline Eigen::MatrixXd view(const Dataset& ds, const ColumnSelection& sel, std::span<const std::size_t> rows) {
  if (rows.empty()) throw Error("cannot view an empty set of rows");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(sel.dim()));
  for (std::size_t j = 0; j < sel.dim(); ++j) {
    const auto cols = resolve(ds, sel.selected[j]);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i] >= ds.rows()) throw Error(fmt::format("row index {} out of range (rows = {})", rows[i], ds.rows()));
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = evaluate(ds, cols, sel.selected[j], rows[i]);
    }
  }
  return out;
}

inline Eigen::MatrixXd view_all(const Dataset& ds, const ColumnSelection& sel) {
  std::vector<std::size_t> rows(ds.rows());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return view(ds, sel, rows);
}

// ---------------------------------------------------------------------------
// Train/test partition.

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  double fraction = 0.0;

  std::size_t rows() const noexcept { return train.size() + test.size(); }
};

/// Sorts both sides and checks they partition {0, ..., n-1} with neither side empty.
inline SplitIndices make_split(std::vector<std::size_t> train, std::vector<std::size_t> test, std::size_t n) {
  if (train.empty() || test.empty()) throw Error("split has an empty partition");
  if (train.size() + test.size() != n)
    throw Error(fmt::format("split covers {} rows, dataset has {}", train.size() + test.size(), n));
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  std::vector<char> seen(n, 0);
  for (const auto* side : {&train, &test}) {
    for (auto r : *side) {
      if (r >= n) throw Error(fmt::format("split row {} out of range (rows = {})", r, n));
      if (seen[r]++) throw Error(fmt::format("row {} assigned twice", r));
    }
  }
  const double fraction = static_cast<double>(train.size()) / static_cast<double>(n);
  return SplitIndices{std::move(train), std::move(test), fraction};
}

// ---------------------------------------------------------------------------
// CSV ingestion.

struct CsvOptions {
  char delimiter = ',';
  bool header = true;
};

namespace detail {

/// RFC-4180 record reader: quoted fields, doubled quotes, embedded delimiters and newlines.
class CsvReader {
 public:
  CsvReader(std::istream& in, char delimiter) : in_(in), delim_(delimiter) {}

  bool next(std::vector<std::string>& fields) {
    fields.clear();
    std::string field;
    bool in_quotes = false;
    bool any = false;
    bool quoted = false;
    int ch = 0;
    while ((ch = in_.get()) != EOF) {
      any = true;
      const char c = static_cast<char>(ch);
      if (in_quotes) {
        if (c == '"') {
          if (in_.peek() == '"') {
            field += '"';
            in_.get();
          } else {
            in_quotes = false;
          }
        } else {
          if (c == '\n') ++line_;
          field += c;
        }
      } else if (c == '"' && !quoted && field.empty()) {
        in_quotes = true;
        quoted = true;
      } else if (c == delim_) {
        fields.push_back(std::move(field));
        field.clear();
        quoted = false;
      } else if (c == '\n') {
        ++line_;
        break;
      } else if (c != '\r') {
        field += c;
      }
    }
    if (!any) return false;
    if (in_quotes) throw Error(fmt::format("unterminated quoted field near line {}", line_));
    fields.push_back(std::move(field));
    return true;
  }

  std::size_t line() const noexcept { return line_; }

 private:
  std::istream& in_;
  char delim_;
  std::size_t line_ = 0;
};

inline bool is_missing_token(std::string_view s) {
  return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "NULL";
}

/// Parses a finite real; non-finite spellings ("inf", "nan") count as missing.
inline std::optional<double> parse_real(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline bool is_blank_record(const std::vector<std::string>& fields) {
  return fields.size() == 1 && trim(fields[0]).empty();
}

}  // namespace detail

inline Dataset parse_csv(std::istream& in, std::string name, const CsvOptions& options = {}) {
  detail::CsvReader reader(in, options.delimiter);
  std::vector<std::string> fields;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> records;
  if (options.header) {
    if (!reader.next(fields)) throw Error(fmt::format("'{}' is empty", name));
    for (auto& f : fields) header.emplace_back(detail::trim(f));
  }
  while (reader.next(fields)) {
    if (detail::is_blank_record(fields)) continue;
    if (header.empty() && !options.header)
      for (std::size_t j = 0; j < fields.size(); ++j) header.push_back(fmt::format("V{}", j + 1));
    if (fields.size() != header.size())
      throw Error(fmt::format("'{}' line {}: expected {} fields, found {}", name, reader.line(), header.size(),
                              fields.size()));
    records.push_back(fields);
  }
  {
    std::unordered_set<std::string> seen;
    for (const auto& h : header)
      if (!seen.insert(h).second) throw Error(fmt::format("'{}': duplicate header name '{}'", name, h));
  }

  const std::size_t ncols = header.size();
  // A column is numeric iff every non-missing cell parses as a finite real.
  std::vector<bool> numeric(ncols, true);
  for (const auto& rec : records)
    for (std::size_t j = 0; j < ncols; ++j) {
      if (!numeric[j]) continue;
      const auto cell = detail::trim(rec[j]);
      if (detail::is_missing_token(cell)) continue;
      const auto v = detail::parse_real(cell);
      if (!v.has_value()) numeric[j] = false;
    }

  std::vector<Column> columns;
  std::size_t num_slots = 0;
  std::size_t cat_slots = 0;
  for (std::size_t j = 0; j < ncols; ++j) {
    const auto kind = numeric[j] ? ColumnKind::numeric : ColumnKind::categorical;
    columns.push_back(Column{header[j], kind, kind == ColumnKind::numeric ? num_slots++ : cat_slots++});
  }

  std::vector<double> values;
  values.reserve(records.size() * num_slots);
  std::vector<Dataset::Categorical> cats(cat_slots);
  std::vector<std::map<std::string, std::int32_t, std::less<>>> level_index(cat_slots);
  std::size_t dropped = 0;
  std::vector<double> row_values(num_slots);
  for (const auto& rec : records) {
    bool complete = true;
    for (std::size_t j = 0; j < ncols && complete; ++j) {
      const auto cell = detail::trim(rec[j]);
      if (detail::is_missing_token(cell)) {
        complete = false;
      } else if (columns[j].kind == ColumnKind::numeric) {
        const auto v = detail::parse_real(cell);
        if (!v || !std::isfinite(*v)) complete = false;
        else row_values[columns[j].slot] = *v;
      }
    }
    if (!complete) {
      ++dropped;
      continue;
    }
    values.insert(values.end(), row_values.begin(), row_values.end());
    for (std::size_t j = 0; j < ncols; ++j) {
      if (columns[j].kind != ColumnKind::categorical) continue;
      const auto slot = columns[j].slot;
      const std::string cell(detail::trim(rec[j]));
      auto [it, inserted] = level_index[slot].try_emplace(cell, static_cast<std::int32_t>(cats[slot].levels.size()));
      if (inserted) cats[slot].levels.push_back(cell);
      cats[slot].codes.push_back(it->second);
    }
  }
  const std::size_t rows = records.size() - dropped;
  if (rows == 0) throw Error(fmt::format("'{}' has no usable rows ({} dropped)", name, dropped));
  return Dataset(std::move(name), std::move(columns), rows, std::move(values), std::move(cats), dropped);
}

inline Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot read '{}'", path.string()));
  return parse_csv(in, path.stem().string(), options);
}

namespace detail {

inline std::string csv_escape(const std::string& s, char delimiter) {
  if (s.find_first_of(std::string{delimiter, '"', '\n', '\r'}) == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace detail

inline void write_csv(const Dataset& ds, std::ostream& out, char delimiter = ',') {
  const auto cols = ds.columns();
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (j > 0) out << delimiter;
    out << detail::csv_escape(cols[j].name, delimiter);
  }
  out << '\n';
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      if (j > 0) out << delimiter;
      out << detail::csv_escape(ds.cell_text(i, cols[j]), delimiter);
    }
    out << '\n';
  }
}

inline void write_csv(const Dataset& ds, const std::filesystem::path& path, char delimiter = ',') {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  write_csv(ds, out, delimiter);
}

}  // namespace splitdiag
