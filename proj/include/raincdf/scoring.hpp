#pragma once

// CDF predictions and the evaluation metric.
//
// A prediction is a cumulative distribution over integer rain amounts:
// probs[j] = P(y <= j) for j = 0..69. The score of a batch is the mean
// squared difference between each predicted CDF and the true label's step
// function, averaged over both rows and bins:
//
//   score = (1 / (70 m)) * sum_i sum_j (probs_i[j] - H(j - y_i))^2
//
// where H(x) = 1 for x >= 0 and 0 otherwise. Lower is better; predicting
// the exact step CDF of the label scores 0.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "raincdf/common.hpp"

namespace raincdf {

struct CdfPrediction {
  std::array<double, kNumBins> probs{};

  bool operator==(const CdfPrediction&) const = default;
};

inline double heaviside(double x) { return x >= 0.0 ? 1.0 : 0.0; }

// Step CDF of a point estimate: 0 for bins below it, 1 from the first bin
// at or above it. An estimate above 69 yields the all-zeros row.
inline CdfPrediction step_cdf(double estimate) {
  CdfPrediction p;
  for (std::size_t j = 0; j < kNumBins; ++j) {
    p.probs[j] = heaviside(static_cast<double>(j) - estimate);
  }
  return p;
}

inline bool is_valid_cdf(const CdfPrediction& p) {
  double prev = 0.0;
  for (double v : p.probs) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0 || v < prev) return false;
    prev = v;
  }
  return true;
}

namespace detail {

// Per-bin label counts shared by the histogram model and k-NN prediction,
// so that both produce bitwise identical CDFs from the same labels. Labels
// land in bin ceil(y), clamped below at 0; labels above 69 fall off the end
// and leave the CDF short of 1.
inline void count_bins(std::span<const double> labels,
                       std::array<std::uint64_t, kNumBins>& counts) {
  for (double y : labels) {
    double c = std::ceil(y);
    if (c < 0.0) c = 0.0;
    if (c < static_cast<double>(kNumBins)) {
      counts[static_cast<std::size_t>(c)] += 1;
    }
  }
}

inline CdfPrediction cdf_from_counts(const std::array<std::uint64_t, kNumBins>& counts,
                                     std::size_t n) {
  CdfPrediction p;
  std::uint64_t cum = 0;
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t j = 0; j < kNumBins; ++j) {
    cum += counts[j];
    p.probs[j] = static_cast<double>(cum) * inv;
  }
  return p;
}

}  // namespace detail

// Empirical CDF of a non-empty label set.
inline CdfPrediction empirical_cdf(std::span<const double> labels) {
  if (labels.empty()) throw DataError("empirical_cdf: empty label set");
  std::array<std::uint64_t, kNumBins> counts{};
  detail::count_bins(labels, counts);
  return detail::cdf_from_counts(counts, labels.size());
}

// Unnormalized squared loss of one row: sum over bins of
// (probs[j] - H(j - label))^2.
inline double row_loss(const CdfPrediction& pred, double label) {
  double sum = 0.0;
  for (std::size_t j = 0; j < kNumBins; ++j) {
    const double d = pred.probs[j] - heaviside(static_cast<double>(j) - label);
    sum += d * d;
  }
  return sum;
}

struct ScoreReport {
  double score = 0.0;
  std::size_t rows = 0;
  // Mean squared loss contributed by each bin; score is their mean.
  std::array<double, kNumBins> per_bin_loss{};
};

// Scores a batch of predictions against labels. Work is split into fixed
// 4096-row chunks whose partial sums are combined in chunk order, so the
// result is identical for any thread count.
inline ScoreReport score(std::span<const CdfPrediction> preds,
                         std::span<const double> labels, unsigned threads = 1) {
  if (preds.size() != labels.size()) {
    throw DataError("score: " + std::to_string(preds.size()) + " predictions vs " +
                    std::to_string(labels.size()) + " labels");
  }
  if (preds.empty()) throw DataError("score: empty batch");

  constexpr std::size_t kChunk = 4096;
  const std::size_t m = preds.size();
  const std::size_t n_chunks = (m + kChunk - 1) / kChunk;
  std::vector<std::array<double, kNumBins>> partial(n_chunks);
  std::vector<std::size_t> bad_row(n_chunks, m);

  parallel_chunks(m, kChunk, threads, [&](std::size_t c, std::size_t begin, std::size_t end) {
    auto& sums = partial[c];
    sums.fill(0.0);
    for (std::size_t i = begin; i < end; ++i) {
      if (!is_valid_cdf(preds[i])) {
        bad_row[c] = std::min(bad_row[c], i);
        return;
      }
      const double y = labels[i];
      for (std::size_t j = 0; j < kNumBins; ++j) {
        const double d = preds[i].probs[j] - heaviside(static_cast<double>(j) - y);
        sums[j] += d * d;
      }
    }
  });

  for (std::size_t c = 0; c < n_chunks; ++c) {
    if (bad_row[c] != m) {
      throw DataError("score: row " + std::to_string(bad_row[c]) +
                      " is not a valid CDF (values in [0,1], non-decreasing)");
    }
  }

  ScoreReport report;
  report.rows = m;
  std::array<double, kNumBins> totals{};
  for (std::size_t c = 0; c < n_chunks; ++c) {
    for (std::size_t j = 0; j < kNumBins; ++j) totals[j] += partial[c][j];
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < kNumBins; ++j) {
    report.per_bin_loss[j] = totals[j] / static_cast<double>(m);
    sum += report.per_bin_loss[j];
  }
  report.score = sum / static_cast<double>(kNumBins);
  return report;
}

// ---- file formats ----------------------------------------------------

// Prediction files are CSV with header p0,p1,...,p69 and one row of 70
// floats per record, in dataset order.

inline void write_predictions(std::span<const CdfPrediction> preds,
                              const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  for (std::size_t j = 0; j < kNumBins; ++j) {
    out << (j == 0 ? "p" : ",p") << j;
  }
  out << '\n';
  for (const auto& p : preds) {
    for (std::size_t j = 0; j < kNumBins; ++j) {
      if (j > 0) out << ',';
      out << format_double(p.probs[j]);
    }
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

namespace detail {

inline void split_csv_line(std::string_view line, std::vector<std::string_view>& fields) {
  fields.clear();
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      fields.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

}  // namespace detail

inline std::vector<CdfPrediction> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty prediction file: " + path.string());
  std::vector<std::string_view> fields;
  detail::split_csv_line(line, fields);
  if (fields.size() != kNumBins) {
    throw DataError(path.string() + ": expected " + std::to_string(kNumBins) +
                    " header columns, got " + std::to_string(fields.size()));
  }
  for (std::size_t j = 0; j < kNumBins; ++j) {
    if (detail::trim(fields[j]) != "p" + std::to_string(j)) {
      throw DataError(path.string() + ": bad prediction header at column " + std::to_string(j));
    }
  }
  std::vector<CdfPrediction> preds;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    const std::string_view trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    detail::split_csv_line(line, fields);
    if (fields.size() != kNumBins) {
      throw DataError(path.string() + ": row " + std::to_string(row) + " has " +
                      std::to_string(fields.size()) + " fields, expected " +
                      std::to_string(kNumBins));
    }
    CdfPrediction p;
    for (std::size_t j = 0; j < kNumBins; ++j) {
      if (!parse_double(detail::trim(fields[j]), p.probs[j])) {
        throw DataError(path.string() + ": row " + std::to_string(row) + ", column p" +
                        std::to_string(j) + ": malformed float");
      }
    }
    preds.push_back(p);
  }
  return preds;
}

// Reads labels from a CSV that contains a "Label" column (a bare
// single-column label file qualifies).
inline std::vector<double> read_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty label file: " + path.string());
  std::vector<std::string_view> fields;
  detail::split_csv_line(line, fields);
  std::size_t label_col = fields.size();
  for (std::size_t j = 0; j < fields.size(); ++j) {
    if (detail::trim(fields[j]) == "Label") {
      label_col = j;
      break;
    }
  }
  if (label_col == fields.size()) {
    throw DataError(path.string() + ": no Label column in header");
  }
  const std::size_t n_cols = fields.size();
  std::vector<double> labels;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    const std::string_view trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    detail::split_csv_line(line, fields);
    if (fields.size() != n_cols) {
      throw DataError(path.string() + ": row " + std::to_string(row) + " has " +
                      std::to_string(fields.size()) + " fields, expected " +
                      std::to_string(n_cols));
    }
    double v = 0.0;
    if (!parse_double(detail::trim(fields[label_col]), v)) {
      throw DataError(path.string() + ": row " + std::to_string(row) + ": malformed label");
    }
    labels.push_back(v);
  }
  return labels;
}

inline void write_labels(std::span<const double> labels, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << "Label\n";
  for (double v : labels) out << format_double(v) << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace raincdf
