#pragma once

// Raw dataset parsing, serialization, and feature derivation.
//
// Raw files are comma-delimited UTF-8 with one header row. Each cell is a
// space-separated list of float tokens, one per radar scan; the TimeToEnd
// column carries the scan schedule in minutes-to-end-of-hour. The token
// `nan` (case-insensitive) marks a missing scalar and is dropped together
// with its paired time; an empty cell is a fully missing series. Labels,
// when present, live in a column named "Label".
//
// Derivation collapses each retained series to its arithmetic mean, except
// TimeToEnd which becomes the coverage fraction (max(times) - min(times))/60
// under the schema name "Coverage". Empty cells yield the policy's fill
// value, so derived rows are always finite.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "raincdf/common.hpp"
#include "raincdf/dataset.hpp"
#include "raincdf/scoring.hpp"

namespace raincdf {

inline constexpr std::string_view kTimeColumn = "TimeToEnd";
inline constexpr std::string_view kCoverageColumn = "Coverage";
inline constexpr std::string_view kLabelColumn = "Label";

namespace detail {

inline void split_space(std::string_view text, std::vector<std::string_view>& tokens) {
  tokens.clear();
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && text[i] == ' ') ++i;
    const std::size_t start = i;
    while (i < text.size() && text[i] != ' ') ++i;
    if (i > start) tokens.push_back(text.substr(start, i - start));
  }
}

inline bool is_nan_token(std::string_view t) {
  if (t.size() != 3) return false;
  auto lower = [](char c) { return (c >= 'A' && c <= 'Z') ? char(c + 32) : c; };
  return lower(t[0]) == 'n' && lower(t[1]) == 'a' && lower(t[2]) == 'n';
}

}  // namespace detail

// Streaming parser: one RawRecord at a time, so callers can derive features
// from large files without materializing the raw dataset.
class DatasetReader {
 public:
  DatasetReader(const std::filesystem::path& path, bool has_labels)
      : path_(path.string()), in_(path), has_labels_(has_labels) {
    if (!in_) throw DataError("cannot open: " + path_);
    std::string header;
    if (!std::getline(in_, header)) throw DataError("empty file: " + path_);
    std::vector<std::string_view> fields;
    detail::split_csv_line(header, fields);
    for (std::size_t i = 0; i < fields.size(); ++i) {
      const std::string name(detail::trim(fields[i]));
      if (name == kLabelColumn) {
        if (label_col_) throw DataError(path_ + ": duplicate Label column");
        label_col_ = i;
        continue;
      }
      if (std::find(schema_.begin(), schema_.end(), name) != schema_.end()) {
        throw DataError(path_ + ": duplicate column: " + name);
      }
      column_of_field_.resize(i + 1, SIZE_MAX);
      column_of_field_[i] = schema_.size();
      schema_.push_back(name);
    }
    column_of_field_.resize(fields.size(), SIZE_MAX);
    n_fields_ = fields.size();
    for (std::string_view required : {kTimeColumn, std::string_view("RR1"),
                                      std::string_view("RR2"), std::string_view("RR3")}) {
      if (std::find(schema_.begin(), schema_.end(), required) == schema_.end()) {
        throw DataError(path_ + ": missing required column: " + std::string(required));
      }
    }
    if (has_labels_ && !label_col_) {
      throw DataError(path_ + ": missing required column: " + std::string(kLabelColumn));
    }
    time_idx_ = 0;
    while (schema_[time_idx_] != kTimeColumn) ++time_idx_;
  }

  const std::vector<std::string>& schema() const { return schema_; }
  bool has_labels() const { return has_labels_; }

  std::optional<RawRecord> next() {
    while (std::getline(in_, line_)) {
      ++row_;
      if (detail::trim(line_).empty()) continue;
      return parse_row();
    }
    return std::nullopt;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw DataError(path_ + ": row " + std::to_string(row_) + ": " + msg);
  }

  double parse_float_token(std::string_view token, const std::string& column) const {
    double v = 0.0;
    if (!parse_double(token, v) || !std::isfinite(v)) {
      fail("column " + column + ": malformed float token '" + std::string(token) + "'");
    }
    return v;
  }

  RawRecord parse_row() {
    std::vector<std::string_view> fields;
    detail::split_csv_line(detail::trim(line_), fields);
    if (fields.size() != n_fields_) {
      fail("expected " + std::to_string(n_fields_) + " fields, got " +
           std::to_string(fields.size()));
    }

    RawRecord rec;
    rec.id = next_id_++;
    rec.cells.resize(schema_.size());

    // The TimeToEnd field fixes the scan schedule; nan entries there drop
    // that scan index from every series.
    std::size_t time_field = 0;
    for (std::size_t f = 0; f < fields.size(); ++f) {
      if (column_of_field_[f] == time_idx_) time_field = f;
    }
    detail::split_space(detail::trim(fields[time_field]), tokens_);
    const std::size_t n_scans = tokens_.size();
    raw_times_.assign(n_scans, 0.0);
    time_missing_.assign(n_scans, false);
    auto& tte = rec.cells[time_idx_];
    for (std::size_t i = 0; i < n_scans; ++i) {
      if (detail::is_nan_token(tokens_[i])) {
        time_missing_[i] = true;
        continue;
      }
      const double t = parse_float_token(tokens_[i], std::string(kTimeColumn));
      if (t < 0.0 || t > 60.0) fail("time " + format_double(t) + " outside [0, 60]");
      raw_times_[i] = t;
      if (!tte.times.empty() && t >= tte.times.back()) {
        fail("times not strictly decreasing");
      }
      tte.times.push_back(t);
    }
    tte.values = tte.times;

    for (std::size_t f = 0; f < fields.size(); ++f) {
      const std::size_t col = column_of_field_[f];
      if (col == SIZE_MAX) {  // label field
        const std::string_view text = detail::trim(fields[f]);
        const double y = parse_float_token(text, std::string(kLabelColumn));
        if (y < 0.0) fail("negative label " + format_double(y));
        rec.label = y;
        continue;
      }
      if (col == time_idx_) continue;
      const std::string_view text = detail::trim(fields[f]);
      auto& cell = rec.cells[col];
      if (text.empty()) continue;  // fully missing series
      detail::split_space(text, tokens_);
      if (tokens_.size() != n_scans) {
        fail("column " + schema_[col] + ": series has " + std::to_string(tokens_.size()) +
             " entries, scan schedule has " + std::to_string(n_scans));
      }
      for (std::size_t i = 0; i < n_scans; ++i) {
        if (time_missing_[i] || detail::is_nan_token(tokens_[i])) continue;
        cell.values.push_back(parse_float_token(tokens_[i], schema_[col]));
        cell.times.push_back(raw_times_[i]);
      }
    }
    if (has_labels_ && !rec.label) fail("missing label");
    return rec;
  }

  std::string path_;
  std::ifstream in_;
  bool has_labels_ = false;
  std::vector<std::string> schema_;
  std::vector<std::size_t> column_of_field_;  // SIZE_MAX marks the label field
  std::optional<std::size_t> label_col_;
  std::size_t n_fields_ = 0;
  std::size_t time_idx_ = 0;
  std::size_t row_ = 0;
  std::int64_t next_id_ = 0;
  std::string line_;
  std::vector<std::string_view> tokens_;
  std::vector<double> raw_times_;
  std::vector<char> time_missing_;
};

inline RawDataset parse_dataset(const std::filesystem::path& path, bool has_labels) {
  DatasetReader reader(path, has_labels);
  RawDataset ds;
  ds.schema = reader.schema();
  ds.has_labels = has_labels;
  while (auto rec = reader.next()) ds.records.push_back(std::move(*rec));
  return ds;
}

// Streaming writer matching DatasetReader's format. Series shorter than the
// scan schedule (entries dropped as missing at parse time) are re-emitted
// with nan placeholders so a reparse reproduces the record exactly.
class DatasetWriter {
 public:
  DatasetWriter(const std::filesystem::path& path, std::vector<std::string> schema,
                bool has_labels)
      : path_(path.string()), out_(path), schema_(std::move(schema)), has_labels_(has_labels) {
    if (!out_) throw DataError("cannot open for writing: " + path_);
    time_idx_ = 0;
    while (time_idx_ < schema_.size() && schema_[time_idx_] != kTimeColumn) ++time_idx_;
    if (time_idx_ == schema_.size()) {
      throw DataError("cannot serialize dataset without a TimeToEnd column");
    }
    for (std::size_t i = 0; i < schema_.size(); ++i) {
      if (i > 0) out_ << ',';
      out_ << schema_[i];
    }
    if (has_labels_) out_ << ',' << kLabelColumn;
    out_ << '\n';
  }

  void write(const RawRecord& rec) {
    if (rec.cells.size() != schema_.size()) {
      throw DataError("record has " + std::to_string(rec.cells.size()) +
                      " cells, schema has " + std::to_string(schema_.size()));
    }
    const auto& times = rec.cells[time_idx_].times;
    for (std::size_t c = 0; c < schema_.size(); ++c) {
      if (c > 0) out_ << ',';
      const auto& cell = rec.cells[c];
      if (c == time_idx_ || cell.empty()) {
        write_tokens(cell.values);
        continue;
      }
      // Align the cell's kept entries with the scan schedule, padding
      // dropped entries with nan.
      std::size_t next = 0;
      for (std::size_t i = 0; i < times.size(); ++i) {
        if (i > 0) out_ << ' ';
        if (next < cell.times.size() && cell.times[next] == times[i]) {
          out_ << format_double(cell.values[next]);
          ++next;
        } else {
          out_ << "nan";
        }
      }
      if (next != cell.times.size()) {
        throw DataError("record " + std::to_string(rec.id) + ", column " + schema_[c] +
                        ": series times are not a subset of the scan schedule");
      }
    }
    if (has_labels_) {
      if (!rec.label) throw DataError("record " + std::to_string(rec.id) + ": missing label");
      out_ << ',' << format_double(*rec.label);
    }
    out_ << '\n';
    if (!out_) throw DataError("write failed: " + path_);
  }

 private:
  void write_tokens(const std::vector<double>& values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i > 0) out_ << ' ';
      out_ << format_double(values[i]);
    }
  }

  std::string path_;
  std::ofstream out_;
  std::vector<std::string> schema_;
  bool has_labels_ = false;
  std::size_t time_idx_ = 0;
};

inline void write_dataset(const RawDataset& ds, const std::filesystem::path& path) {
  DatasetWriter writer(path, ds.schema, ds.has_labels);
  for (const auto& rec : ds.records) writer.write(rec);
}

// ---- feature derivation ------------------------------------------------

struct MissingDataPolicy {
  std::vector<std::string> dropped_columns{"RR2", "RR3"};
  double fill_value = 0.0;

  bool drops(std::string_view name) const {
    return std::find(dropped_columns.begin(), dropped_columns.end(), name) !=
           dropped_columns.end();
  }
};

inline MissingDataPolicy keep_all_policy() { return {.dropped_columns = {}, .fill_value = 0.0}; }

inline std::vector<std::string> derived_schema(const std::vector<std::string>& raw_schema,
                                               const MissingDataPolicy& policy) {
  std::vector<std::string> out;
  out.reserve(raw_schema.size());
  for (const auto& name : raw_schema) {
    if (policy.drops(name)) continue;
    out.push_back(name == kTimeColumn ? std::string(kCoverageColumn) : name);
  }
  return out;
}

inline FeatureVector derive_features(const RawRecord& rec,
                                     const std::vector<std::string>& raw_schema,
                                     const MissingDataPolicy& policy) {
  FeatureVector out;
  out.label = rec.label;
  out.values.reserve(raw_schema.size());
  for (std::size_t c = 0; c < raw_schema.size(); ++c) {
    if (policy.drops(raw_schema[c])) continue;
    const auto& cell = rec.cells[c];
    if (raw_schema[c] == kTimeColumn) {
      if (cell.empty()) {
        out.values.push_back(0.0);
      } else {
        const auto [lo, hi] = std::minmax_element(cell.times.begin(), cell.times.end());
        out.values.push_back((*hi - *lo) / 60.0);
      }
      continue;
    }
    if (cell.empty()) {
      out.values.push_back(policy.fill_value);
      continue;
    }
    double sum = 0.0;
    for (double v : cell.values) sum += v;
    out.values.push_back(sum / static_cast<double>(cell.values.size()));
  }
  return out;
}

inline Dataset derive_dataset(const RawDataset& raw, const MissingDataPolicy& policy = {}) {
  Dataset out;
  out.schema = derived_schema(raw.schema, policy);
  out.has_labels = raw.has_labels;
  out.records.reserve(raw.records.size());
  for (const auto& rec : raw.records) {
    out.records.push_back(derive_features(rec, raw.schema, policy));
  }
  return out;
}

// Streaming parse + derive, for files too large to hold as raw records.
inline Dataset derive_file(const std::filesystem::path& path, bool has_labels,
                           const MissingDataPolicy& policy = {}) {
  DatasetReader reader(path, has_labels);
  Dataset out;
  out.schema = derived_schema(reader.schema(), policy);
  out.has_labels = has_labels;
  while (auto rec = reader.next()) {
    out.records.push_back(derive_features(*rec, reader.schema(), policy));
  }
  return out;
}

// One pass producing both the default-policy view (RR2/RR3 dropped) and the
// keep-everything view needed by the averaging predictors.
inline std::pair<Dataset, Dataset> derive_file_both(const std::filesystem::path& path,
                                                    bool has_labels) {
  const MissingDataPolicy standard{};
  const MissingDataPolicy keep = keep_all_policy();
  DatasetReader reader(path, has_labels);
  Dataset std_view;
  std_view.schema = derived_schema(reader.schema(), standard);
  std_view.has_labels = has_labels;
  Dataset full_view;
  full_view.schema = derived_schema(reader.schema(), keep);
  full_view.has_labels = has_labels;
  while (auto rec = reader.next()) {
    std_view.records.push_back(derive_features(*rec, reader.schema(), standard));
    full_view.records.push_back(derive_features(*rec, reader.schema(), keep));
  }
  return {std::move(std_view), std::move(full_view)};
}

// ---- derived (feature) CSV ----------------------------------------------

inline void write_feature_header(std::ofstream& out, const std::vector<std::string>& schema,
                                 bool has_labels) {
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (i > 0) out << ',';
    out << schema[i];
  }
  if (has_labels) out << ',' << kLabelColumn;
  out << '\n';
}

inline void write_feature_row(std::ofstream& out, const FeatureVector& row, bool has_labels) {
  for (std::size_t i = 0; i < row.values.size(); ++i) {
    if (i > 0) out << ',';
    out << format_double(row.values[i]);
  }
  if (has_labels) {
    if (!row.label) throw DataError("record missing label");
    out << ',' << format_double(*row.label);
  }
  out << '\n';
}

inline void write_feature_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  write_feature_header(out, ds.schema, ds.has_labels);
  for (const auto& row : ds.records) write_feature_row(out, row, ds.has_labels);
  if (!out) throw DataError("write failed: " + path.string());
}

inline Dataset read_feature_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty file: " + path.string());
  std::vector<std::string_view> fields;
  detail::split_csv_line(line, fields);
  Dataset ds;
  std::size_t label_col = SIZE_MAX;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const std::string name(detail::trim(fields[i]));
    if (name == kLabelColumn) {
      if (label_col != SIZE_MAX) throw DataError(path.string() + ": duplicate Label column");
      label_col = i;
      ds.has_labels = true;
      continue;
    }
    ds.schema.push_back(name);
  }
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    detail::split_csv_line(detail::trim(line), fields);
    if (fields.size() != ds.schema.size() + (ds.has_labels ? 1 : 0)) {
      throw DataError(path.string() + ": row " + std::to_string(row) + ": expected " +
                      std::to_string(ds.schema.size() + (ds.has_labels ? 1 : 0)) +
                      " fields, got " + std::to_string(fields.size()));
    }
    FeatureVector fv;
    std::size_t col = 0;
    for (std::size_t f = 0; f < fields.size(); ++f) {
      double v = 0.0;
      if (!parse_double(detail::trim(fields[f]), v) || !std::isfinite(v)) {
        throw DataError(path.string() + ": row " + std::to_string(row) +
                        ": malformed float in field " + std::to_string(f));
      }
      if (f == label_col) {
        fv.label = v;
      } else {
        fv.values.push_back(v);
        ++col;
      }
    }
    ds.records.push_back(std::move(fv));
  }
  return ds;
}

}  // namespace raincdf
