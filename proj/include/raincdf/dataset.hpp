#pragma once

// Core data containers.
//
// A raw record is one labeled hour: each column holds a time series of
// radar scan values paired with minutes-to-end-of-hour timestamps. A
// derived record collapses each series to a single feature.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "raincdf/common.hpp"

namespace raincdf {

// One column of one record. values[i] was scanned at times[i]; entries
// dropped as missing simply do not appear. The TimeToEnd column stores its
// timestamps in both fields.
struct TimeSeriesCell {
  std::vector<double> values;
  std::vector<double> times;

  bool empty() const { return values.empty(); }

  bool operator==(const TimeSeriesCell&) const = default;
};

struct RawRecord {
  std::int64_t id = 0;
  std::vector<TimeSeriesCell> cells;  // one per schema column
  std::optional<double> label;

  bool operator==(const RawRecord&) const = default;
};

struct RawDataset {
  std::vector<std::string> schema;  // column names, label excluded
  bool has_labels = false;
  std::vector<RawRecord> records;

  std::size_t size() const { return records.size(); }

  std::optional<std::size_t> column_index(std::string_view name) const {
    for (std::size_t i = 0; i < schema.size(); ++i) {
      if (schema[i] == name) return i;
    }
    return std::nullopt;
  }

  bool operator==(const RawDataset&) const = default;
};

struct FeatureVector {
  std::vector<double> values;
  std::optional<double> label;

  bool operator==(const FeatureVector&) const = default;
};

struct Dataset {
  std::vector<std::string> schema;  // feature names, label excluded
  bool has_labels = false;
  std::vector<FeatureVector> records;

  std::size_t size() const { return records.size(); }

  std::optional<std::size_t> feature_index(std::string_view name) const {
    for (std::size_t i = 0; i < schema.size(); ++i) {
      if (schema[i] == name) return i;
    }
    return std::nullopt;
  }

  // Feature index or a schema error naming the missing column.
  std::size_t require_feature(std::string_view name) const {
    if (auto idx = feature_index(name)) return *idx;
    throw DataError("missing required feature column: " + std::string(name));
  }

  // Labels of all records; every record must carry one.
  std::vector<double> labels() const {
    std::vector<double> out;
    out.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (!records[i].label) {
        throw DataError("record " + std::to_string(i) + " has no label");
      }
      out.push_back(*records[i].label);
    }
    return out;
  }

  bool operator==(const Dataset&) const = default;
};

// Copy of a derived dataset with the named feature columns removed. Names
// not present in the schema are ignored, so dropping already-absent
// columns is a no-op.
inline Dataset drop_features(const Dataset& data, std::span<const std::string> names) {
  std::vector<std::size_t> keep;
  keep.reserve(data.schema.size());
  for (std::size_t i = 0; i < data.schema.size(); ++i) {
    bool dropped = false;
    for (const auto& name : names) {
      if (data.schema[i] == name) {
        dropped = true;
        break;
      }
    }
    if (!dropped) keep.push_back(i);
  }
  Dataset out;
  out.has_labels = data.has_labels;
  out.schema.reserve(keep.size());
  for (std::size_t i : keep) out.schema.push_back(data.schema[i]);
  out.records.reserve(data.records.size());
  for (const auto& rec : data.records) {
    FeatureVector fv;
    fv.label = rec.label;
    fv.values.reserve(keep.size());
    for (std::size_t i : keep) fv.values.push_back(rec.values[i]);
    out.records.push_back(std::move(fv));
  }
  return out;
}

// Disjoint random train/validation split. Rows are drawn without
// replacement from a seeded shuffle, so a given (dataset, seed) always
// yields the same train partition regardless of n_val.
template <typename DatasetT>
std::pair<DatasetT, DatasetT> split(const DatasetT& data, std::size_t n_train,
                                    std::size_t n_val, std::uint64_t seed) {
  if (n_train + n_val > data.records.size()) {
    throw ConfigError("split: requested " + std::to_string(n_train) + "+" +
                      std::to_string(n_val) + " rows from " +
                      std::to_string(data.records.size()));
  }
  Rng rng(seed);
  const auto order = shuffled_indices(data.records.size(), rng);
  DatasetT train;
  train.schema = data.schema;
  train.has_labels = data.has_labels;
  train.records.reserve(n_train);
  DatasetT val;
  val.schema = data.schema;
  val.has_labels = data.has_labels;
  val.records.reserve(n_val);
  for (std::size_t i = 0; i < n_train; ++i) train.records.push_back(data.records[order[i]]);
  for (std::size_t i = 0; i < n_val; ++i) {
    val.records.push_back(data.records[order[n_train + i]]);
  }
  return {std::move(train), std::move(val)};
}

}  // namespace raincdf
