#pragma once

// Experiment orchestration: the k sweep, the training-size sweep, the
// predictor benchmark table, and the probe-pair trick that recovers a
// label-CDF value from two scores of known constant predictions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "raincdf/baselines.hpp"
#include "raincdf/common.hpp"
#include "raincdf/dataset.hpp"
#include "raincdf/ensemble.hpp"
#include "raincdf/ingest.hpp"
#include "raincdf/kdtree.hpp"
#include "raincdf/logistic.hpp"
#include "raincdf/scoring.hpp"

namespace raincdf {

struct SweepResult {
  std::string parameter_name;            // "k" or "train_size"
  std::vector<std::size_t> parameter_values;
  std::vector<double> scores;
  nlohmann::ordered_json config;
};

struct SweepOptions {
  std::uint32_t leaf_capacity = 16;
  bool standardize = false;
  unsigned threads = 1;
};

namespace detail {

// Prediction work is chunked at this size; chunk boundaries are fixed, so
// results do not depend on the thread count.
inline constexpr std::size_t kPredictChunk = 4096;

inline std::vector<double> checked_labels(const Dataset& data) {
  auto labels = data.labels();
  if (labels.empty()) throw DataError("empty dataset");
  return labels;
}

}  // namespace detail

// One tree build, one validation score per requested k. Internally queries
// each row once at the largest k: under the (distance, index) total order
// the exact k-nearest result for a smaller k is a prefix of the larger
// one, so smaller ks are scored from prefixes of the same neighbor list.
inline SweepResult sweep_k(const Dataset& train, const Dataset& val,
                           std::span<const std::size_t> k_values, double p,
                           const SweepOptions& options = {}) {
  if (k_values.empty()) throw ConfigError("sweep-k: no k values given");
  auto [points, train_labels] = feature_matrix(train);
  const std::vector<double> val_labels = detail::checked_labels(val);
  for (std::size_t k : k_values) {
    if (k == 0) throw ConfigError("sweep-k: k must be >= 1");
    if (k > points.rows) {
      throw ConfigError("sweep-k: k = " + std::to_string(k) + " exceeds " +
                        std::to_string(points.rows) + " training rows");
    }
  }
  if (val.schema != train.schema) {
    throw DataError("sweep-k: train and validation schemas differ");
  }

  const KdTree tree = KdTree::build(std::move(points), std::move(train_labels),
                                    options.leaf_capacity, options.standardize);

  // Unique ks ascending; duplicates in the request map to the same slot.
  std::vector<std::size_t> unique_ks(k_values.begin(), k_values.end());
  std::sort(unique_ks.begin(), unique_ks.end());
  unique_ks.erase(std::unique(unique_ks.begin(), unique_ks.end()), unique_ks.end());
  const std::size_t kmax = unique_ks.back();
  const std::size_t m_val = val.records.size();

  std::vector<std::vector<CdfPrediction>> preds(unique_ks.size());
  for (auto& v : preds) v.resize(m_val);

  parallel_chunks(m_val, detail::kPredictChunk, options.threads,
                  [&](std::size_t, std::size_t begin, std::size_t end) {
                    std::array<std::uint64_t, kNumBins> counts;
                    for (std::size_t i = begin; i < end; ++i) {
                      const Neighbors nn = tree.query(val.records[i].values, kmax, p);
                      counts.fill(0);
                      std::size_t taken = 0;
                      for (std::size_t u = 0; u < unique_ks.size(); ++u) {
                        const std::size_t k = unique_ks[u];
                        for (; taken < k; ++taken) {
                          double c = std::ceil(tree.labels()[nn.indices[taken]]);
                          if (c < 0.0) c = 0.0;
                          if (c < static_cast<double>(kNumBins)) {
                            counts[static_cast<std::size_t>(c)] += 1;
                          }
                        }
                        preds[u][i] = detail::cdf_from_counts(counts, k);
                      }
                    }
                  });

  SweepResult result;
  result.parameter_name = "k";
  result.parameter_values.assign(k_values.begin(), k_values.end());
  result.scores.resize(k_values.size());
  std::vector<double> unique_scores(unique_ks.size());
  for (std::size_t u = 0; u < unique_ks.size(); ++u) {
    unique_scores[u] = score(preds[u], val_labels, options.threads).score;
  }
  for (std::size_t i = 0; i < k_values.size(); ++i) {
    const auto it = std::lower_bound(unique_ks.begin(), unique_ks.end(), k_values[i]);
    result.scores[i] = unique_scores[static_cast<std::size_t>(it - unique_ks.begin())];
  }
  result.config = {{"parameter", "k"},
                   {"k_values", result.parameter_values},
                   {"p", p},
                   {"leaf_capacity", options.leaf_capacity},
                   {"standardize", options.standardize},
                   {"n_train", tree.size()},
                   {"n_val", m_val}};
  return result;
}

// One score per training-set size at fixed k. Subsets are nested: a single
// seeded shuffle of the training pool is taken and each size uses its
// prefix, so larger sizes strictly add information.
inline SweepResult sweep_size(const Dataset& full_train, const Dataset& val,
                              std::span<const std::size_t> sizes, std::size_t k, double p,
                              std::uint64_t seed, const SweepOptions& options = {}) {
  if (sizes.empty()) throw ConfigError("sweep-size: no sizes given");
  if (!std::is_sorted(sizes.begin(), sizes.end())) {
    throw ConfigError("sweep-size: sizes must be ascending");
  }
  for (std::size_t s : sizes) {
    if (s < k) {
      throw ConfigError("sweep-size: size " + std::to_string(s) + " is below k = " +
                        std::to_string(k));
    }
  }
  if (sizes.back() > full_train.records.size()) {
    throw ConfigError("sweep-size: size " + std::to_string(sizes.back()) + " exceeds " +
                      std::to_string(full_train.records.size()) + " training rows");
  }
  if (val.schema != full_train.schema) {
    throw DataError("sweep-size: train and validation schemas differ");
  }
  const std::vector<double> val_labels = detail::checked_labels(val);
  auto [pool, pool_labels] = feature_matrix(full_train);

  Rng rng(seed);
  const auto order = shuffled_indices(pool.rows, rng);
  const std::size_t m_val = val.records.size();

  SweepResult result;
  result.parameter_name = "train_size";
  result.parameter_values.assign(sizes.begin(), sizes.end());
  result.scores.resize(sizes.size());

  std::vector<CdfPrediction> preds(m_val);
  for (std::size_t si = 0; si < sizes.size(); ++si) {
    const std::size_t n = sizes[si];
    Matrix points(n, pool.cols);
    std::vector<double> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(pool.row(order[i]).begin(), pool.row(order[i]).end(), points.row(i).begin());
      labels[i] = pool_labels[order[i]];
    }
    const KdTree tree = KdTree::build(std::move(points), std::move(labels),
                                      options.leaf_capacity, options.standardize);
    parallel_chunks(m_val, detail::kPredictChunk, options.threads,
                    [&](std::size_t, std::size_t begin, std::size_t end) {
                      for (std::size_t i = begin; i < end; ++i) {
                        preds[i] = tree.predict(val.records[i].values, k, p);
                      }
                    });
    result.scores[si] = score(preds, val_labels, options.threads).score;
  }
  result.config = {{"parameter", "train_size"},
                   {"sizes", result.parameter_values},
                   {"k", k},
                   {"p", p},
                   {"seed", seed},
                   {"leaf_capacity", options.leaf_capacity},
                   {"standardize", options.standardize},
                   {"n_pool", full_train.records.size()},
                   {"n_val", m_val}};
  return result;
}

// ---- benchmark -----------------------------------------------------------

inline const std::vector<std::string>& known_predictors() {
  static const std::vector<std::string> names{"norain",    "sigmoid", "histogram", "simpleavg",
                                              "voting",    "logistic", "knn"};
  return names;
}

struct BenchmarkOptions {
  std::vector<std::string> predictors;
  std::size_t knn_k = 150;
  double knn_p = 2.0;
  std::uint32_t leaf_capacity = 16;
  bool standardize = false;
  double outlier_mm = kDefaultOutlierMm;
  bool voting_bias = false;
  TrainConfig logistic;
  bool sigmoid_full_hour = false;
  unsigned threads = 1;
  std::optional<std::filesystem::path> dump_dir;  // per-predictor prediction files
  nlohmann::ordered_json extra_config;            // provenance passthrough (e.g. seed)
};

struct BenchmarkRow {
  std::string predictor;
  double score = 0.0;
  std::size_t rows_evaluated = 0;
};

struct BenchmarkTable {
  std::vector<BenchmarkRow> rows;  // sorted ascending by score
  nlohmann::ordered_json config;
};

// Trains each requested predictor on the training set and scores it on the
// test set. Inputs are derived datasets that retain RR2/RR3; predictors
// that drop them per the default policy see a view with those columns
// removed.
inline BenchmarkTable run_benchmark(const Dataset& train, const Dataset& test,
                                    const BenchmarkOptions& options) {
  if (options.predictors.empty()) throw ConfigError("benchmark: no predictors requested");
  for (const auto& name : options.predictors) {
    const auto& known = known_predictors();
    if (std::find(known.begin(), known.end(), name) == known.end()) {
      throw ConfigError("benchmark: unknown predictor name: " + name);
    }
  }
  for (std::size_t i = 0; i < options.predictors.size(); ++i) {
    for (std::size_t j = i + 1; j < options.predictors.size(); ++j) {
      if (options.predictors[i] == options.predictors[j]) {
        throw ConfigError("benchmark: duplicate predictor name: " + options.predictors[i]);
      }
    }
  }
  options.logistic.validate();
  if (test.schema != train.schema) {
    throw DataError("benchmark: train and test schemas differ");
  }
  const std::vector<double> test_labels = detail::checked_labels(test);
  const std::size_t m_test = test.records.size();

  const std::vector<std::string> rr_drop{"RR2", "RR3"};
  const Dataset train_std = drop_features(train, rr_drop);
  const Dataset test_std = drop_features(test, rr_drop);

  if (options.dump_dir) std::filesystem::create_directories(*options.dump_dir);

  BenchmarkTable table;
  std::vector<CdfPrediction> preds(m_test);
  auto predict_rows = [&](const Predictor& model, const Dataset& view) {
    parallel_chunks(m_test, detail::kPredictChunk, options.threads,
                    [&](std::size_t, std::size_t begin, std::size_t end) {
                      for (std::size_t i = begin; i < end; ++i) {
                        preds[i] = model.predict(view.records[i].values);
                      }
                    });
  };

  for (const auto& name : options.predictors) {
    if (name == "norain") {
      predict_rows(NoRainPredictor{}, test_std);
    } else if (name == "sigmoid") {
      predict_rows(SigmoidPredictor::for_schema(test_std, options.sigmoid_full_hour), test_std);
    } else if (name == "histogram") {
      const HistogramPredictor model(train_histogram(detail::checked_labels(train_std)));
      predict_rows(model, test_std);
    } else if (name == "simpleavg") {
      predict_rows(SimpleAveragePredictor::for_schema(test), test);
    } else if (name == "voting") {
      const VotingPredictor model(
          fit_voting_weights(train, options.outlier_mm, options.voting_bias),
          RrIndices::for_schema(test));
      predict_rows(model, test);
    } else if (name == "logistic") {
      const LogisticPredictor model(fit_logistic(train_std, options.logistic));
      predict_rows(model, test_std);
    } else {  // knn
      auto [points, labels] = feature_matrix(train_std);
      const KdTree tree = KdTree::build(std::move(points), std::move(labels),
                                        options.leaf_capacity, options.standardize);
      if (options.knn_k > tree.size()) {
        throw ConfigError("benchmark: k = " + std::to_string(options.knn_k) + " exceeds " +
                          std::to_string(tree.size()) + " training rows");
      }
      parallel_chunks(m_test, detail::kPredictChunk, options.threads,
                      [&](std::size_t, std::size_t begin, std::size_t end) {
                        for (std::size_t i = begin; i < end; ++i) {
                          preds[i] = tree.predict(test_std.records[i].values, options.knn_k,
                                                  options.knn_p);
                        }
                      });
    }
    const ScoreReport report = score(preds, test_labels, options.threads);
    table.rows.push_back({name, report.score, report.rows});
    if (options.dump_dir) {
      write_predictions(preds, *options.dump_dir / ("pred_" + name + ".csv"));
    }
  }
  if (options.dump_dir) {
    write_labels(test_labels, *options.dump_dir / "labels.csv");
  }

  std::sort(table.rows.begin(), table.rows.end(), [](const auto& a, const auto& b) {
    return a.score < b.score || (a.score == b.score && a.predictor < b.predictor);
  });

  table.config = {{"predictors", options.predictors},
                  {"n_train", train.records.size()},
                  {"n_test", m_test},
                  {"knn", {{"k", options.knn_k},
                           {"p", options.knn_p},
                           {"leaf_capacity", options.leaf_capacity},
                           {"standardize", options.standardize}}},
                  {"voting", {{"outlier_mm", options.outlier_mm},
                              {"with_bias", options.voting_bias}}},
                  {"logistic", {{"max_iters", options.logistic.max_iters},
                                {"learning_rate", options.logistic.learning_rate},
                                {"tolerance", options.logistic.tolerance},
                                {"l1_lambda", options.logistic.l1_lambda}}},
                  {"sigmoid", {{"normalize_full_hour", options.sigmoid_full_hour}}}};
  if (options.extra_config.is_object()) {
    for (const auto& [key, value] : options.extra_config.items()) {
      table.config[key] = value;
    }
  }
  return table;
}

// ---- bin-proportion inference ---------------------------------------------

// Recovers the fraction of labels <= j from the scores of two constant
// prediction matrices: all-ones, and all-ones with column j zeroed. Zeroing
// column j flips that bin's term between [y > j] and [y <= j], a per-row
// score delta of (2 [y <= j] - 1)/n_bins, which the formula inverts.
inline double infer_bin_proportion(double score_all_ones, double score_col_j_zeroed,
                                   std::size_t n_bins = kNumBins) {
  if (n_bins == 0) throw ConfigError("infer: n_bins must be >= 1");
  if (!std::isfinite(score_all_ones) || !std::isfinite(score_col_j_zeroed)) {
    throw DataError("infer: non-finite score");
  }
  const double p =
      (static_cast<double>(n_bins) * (score_col_j_zeroed - score_all_ones) + 1.0) / 2.0;
  constexpr double kTol = 1e-9;
  if (p < -kTol || p > 1.0 + kTol) {
    throw NumericError("infer: recovered proportion " + format_double(p) +
                       " is outside [0, 1]; the scores are not a probe pair");
  }
  return std::clamp(p, 0.0, 1.0);
}

// The probe pair itself: mean-normalized scores of the all-ones matrix and
// the column-j-zeroed variant against the given labels. The zeroed variant
// is not a valid CDF for j > 0, so this evaluates the raw formula rather
// than going through score().
inline std::pair<double, double> histogram_probe_scores(std::span<const double> labels,
                                                        std::size_t bin) {
  if (labels.empty()) throw DataError("probe: empty label set");
  if (bin >= kNumBins) {
    throw ConfigError("probe: bin " + std::to_string(bin) + " out of range");
  }
  CdfPrediction ones;
  ones.probs.fill(1.0);
  CdfPrediction zeroed = ones;
  zeroed.probs[bin] = 0.0;
  double sum_ones = 0.0;
  double sum_zeroed = 0.0;
  for (double y : labels) {
    sum_ones += row_loss(ones, y);
    sum_zeroed += row_loss(zeroed, y);
  }
  const double norm = static_cast<double>(labels.size()) * static_cast<double>(kNumBins);
  return {sum_ones / norm, sum_zeroed / norm};
}

// ---- result files ----------------------------------------------------------

inline void write_sweep_csv(const SweepResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << result.parameter_name << ",score\n";
  for (std::size_t i = 0; i < result.parameter_values.size(); ++i) {
    out << result.parameter_values[i] << ',' << format_double(result.scores[i]) << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

inline void write_sweep_json(const SweepResult& result, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["parameter"] = result.parameter_name;
  j["values"] = result.parameter_values;
  j["scores"] = result.scores;
  j["config"] = result.config;
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

inline void write_benchmark_csv(const BenchmarkTable& table,
                                const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << "predictor,score,rows_evaluated\n";
  for (const auto& row : table.rows) {
    out << row.predictor << ',' << format_double(row.score) << ',' << row.rows_evaluated
        << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

inline void write_benchmark_json(const BenchmarkTable& table,
                                 const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : table.rows) {
    j["rows"].push_back({{"predictor", row.predictor},
                         {"score", row.score},
                         {"rows_evaluated", row.rows_evaluated}});
  }
  j["config"] = table.config;
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

inline void write_score_report_json(const ScoreReport& report,
                                    const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["score"] = report.score;
  j["rows"] = report.rows;
  j["per_bin_loss"] = report.per_bin_loss;
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace raincdf
