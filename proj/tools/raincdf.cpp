// Command-line pipeline: synthetic data generation, feature derivation,
// model training and prediction, scoring, parameter sweeps, benchmarks, and
// bin-proportion inference. Identical invocations produce byte-identical
// output files.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "raincdf/raincdf.hpp"

namespace {

using namespace raincdf;

// Peeks at the header row to decide whether a file carries labels.
bool file_has_label_column(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw DataError("empty file: " + path.string());
  std::vector<std::string_view> fields;
  detail::split_csv_line(header, fields);
  for (const auto& f : fields) {
    if (detail::trim(f) == kLabelColumn) return true;
  }
  return false;
}

Dataset derive_auto(const std::filesystem::path& path, const MissingDataPolicy& policy,
                    bool require_labels) {
  const bool has_labels = file_has_label_column(path);
  if (require_labels && !has_labels) {
    throw DataError(path.string() + ": a labeled dataset is required (no Label column)");
  }
  return derive_file(path, has_labels, policy);
}

struct GlobalOptions {
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct GenerateArgs {
  std::string config_path;
  std::string out_path;
  std::optional<std::size_t> rows;
  std::optional<double> p0;
  std::optional<double> label_mean;
  std::optional<double> rr1_noise;
  std::optional<double> rr2_noise;
  std::optional<double> rr3_noise;
};

void run_generate(const GenerateArgs& args, const GlobalOptions& global) {
  SyntheticConfig cfg;
  if (!args.config_path.empty()) cfg = load_synthetic_config(args.config_path);
  if (args.rows) cfg.rows = *args.rows;
  if (args.p0) cfg.p0 = *args.p0;
  if (args.label_mean) cfg.label_mean = *args.label_mean;
  if (args.rr1_noise) cfg.rr1_noise = *args.rr1_noise;
  if (args.rr2_noise) cfg.rr2_noise = *args.rr2_noise;
  if (args.rr3_noise) cfg.rr3_noise = *args.rr3_noise;
  cfg.validate();
  generate_synthetic_file(cfg, global.seed, args.out_path);
}

struct DeriveArgs {
  std::string in_path;
  std::string out_path;
  bool keep_rr23 = false;
};

void run_derive(const DeriveArgs& args) {
  const MissingDataPolicy policy = args.keep_rr23 ? keep_all_policy() : MissingDataPolicy{};
  const bool has_labels = file_has_label_column(args.in_path);
  DatasetReader reader(args.in_path, has_labels);
  std::ofstream out(args.out_path);
  if (!out) throw DataError("cannot open for writing: " + args.out_path);
  write_feature_header(out, derived_schema(reader.schema(), policy), has_labels);
  while (auto rec = reader.next()) {
    write_feature_row(out, derive_features(*rec, reader.schema(), policy), has_labels);
  }
  if (!out) throw DataError("write failed: " + args.out_path);
}

struct TrainArgs {
  std::string model;
  std::string train_path;
  std::string out_path;
  double outlier_mm = kDefaultOutlierMm;
  bool with_bias = false;
  TrainConfig logistic;
  std::uint32_t leaf_capacity = 16;
  bool standardize = false;
};

void run_train(const TrainArgs& args) {
  if (args.model == "voting") {
    const Dataset data = derive_auto(args.train_path, keep_all_policy(), true);
    save_voting_weights(fit_voting_weights(data, args.outlier_mm, args.with_bias),
                        args.out_path);
  } else if (args.model == "logistic") {
    const Dataset data = derive_auto(args.train_path, MissingDataPolicy{}, true);
    save_logistic_model(fit_logistic(data, args.logistic), args.out_path);
  } else if (args.model == "knn") {
    const Dataset data = derive_auto(args.train_path, MissingDataPolicy{}, true);
    auto [points, labels] = feature_matrix(data);
    KdTree::build(std::move(points), std::move(labels), args.leaf_capacity, args.standardize)
        .save(args.out_path);
  } else {
    throw ConfigError("train: unknown model: " + args.model +
                      " (expected voting, logistic, or knn)");
  }
}

struct PredictArgs {
  std::string model;
  std::string train_path;
  std::string test_path;
  std::string model_path;
  std::string tree_path;
  std::string out_path;
  std::size_t k = 150;
  double p = 2.0;
  bool normalize_full_hour = false;
};

void run_predict(const PredictArgs& args, const GlobalOptions& global) {
  std::vector<CdfPrediction> preds;
  auto predict_all = [&](const Dataset& view, const Predictor& model) {
    preds.resize(view.records.size());
    parallel_chunks(view.records.size(), 4096, global.threads,
                    [&](std::size_t, std::size_t begin, std::size_t end) {
                      for (std::size_t i = begin; i < end; ++i) {
                        preds[i] = model.predict(view.records[i].values);
                      }
                    });
  };

  if (args.model == "norain") {
    const Dataset test = derive_auto(args.test_path, MissingDataPolicy{}, false);
    predict_all(test, NoRainPredictor{});
  } else if (args.model == "sigmoid") {
    const Dataset test = derive_auto(args.test_path, MissingDataPolicy{}, false);
    predict_all(test, SigmoidPredictor::for_schema(test, args.normalize_full_hour));
  } else if (args.model == "histogram") {
    if (args.train_path.empty()) {
      throw ConfigError("predict: --train is required for the histogram model");
    }
    const Dataset train = derive_auto(args.train_path, MissingDataPolicy{}, true);
    const Dataset test = derive_auto(args.test_path, MissingDataPolicy{}, false);
    predict_all(test, HistogramPredictor(train_histogram(train.labels())));
  } else if (args.model == "simpleavg") {
    const Dataset test = derive_auto(args.test_path, keep_all_policy(), false);
    predict_all(test, SimpleAveragePredictor::for_schema(test));
  } else if (args.model == "voting") {
    if (args.model_path.empty()) {
      throw ConfigError("predict: --model-file is required for the voting model");
    }
    const Dataset test = derive_auto(args.test_path, keep_all_policy(), false);
    predict_all(test,
                VotingPredictor(load_voting_weights(args.model_path),
                                RrIndices::for_schema(test)));
  } else if (args.model == "logistic") {
    if (args.model_path.empty()) {
      throw ConfigError("predict: --model-file is required for the logistic model");
    }
    const Dataset test = derive_auto(args.test_path, MissingDataPolicy{}, false);
    predict_all(test, LogisticPredictor(load_logistic_model(args.model_path)));
  } else if (args.model == "knn") {
    if (args.tree_path.empty()) {
      throw ConfigError("predict: --tree is required for the knn model");
    }
    const KdTree tree = KdTree::load(args.tree_path);
    const Dataset test = derive_auto(args.test_path, MissingDataPolicy{}, false);
    if (test.schema.size() != tree.dim()) {
      throw DataError("predict: test features have dimension " +
                      std::to_string(test.schema.size()) + ", tree expects " +
                      std::to_string(tree.dim()));
    }
    preds.resize(test.records.size());
    parallel_chunks(test.records.size(), 4096, global.threads,
                    [&](std::size_t, std::size_t begin, std::size_t end) {
                      for (std::size_t i = begin; i < end; ++i) {
                        preds[i] = tree.predict(test.records[i].values, args.k, args.p);
                      }
                    });
  } else {
    throw ConfigError("predict: unknown model: " + args.model);
  }
  write_predictions(preds, args.out_path);
}

struct ScoreArgs {
  std::string pred_path;
  std::string labels_path;
  std::string out_path;
};

void run_score(const ScoreArgs& args, const GlobalOptions& global) {
  const auto preds = read_predictions(args.pred_path);
  const auto labels = read_labels(args.labels_path);
  const ScoreReport report = score(preds, labels, global.threads);
  if (!args.out_path.empty()) write_score_report_json(report, args.out_path);
  std::cout << format_double(report.score) << '\n';
}

struct SweepCommonArgs {
  std::string data_path;
  std::string train_path;
  std::string val_path;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  double p = 2.0;
  std::uint32_t leaf_capacity = 16;
  bool standardize = false;
  std::string out_csv;
  std::string out_json;
};

// Either one file plus split sizes, or two pre-split files.
std::pair<Dataset, Dataset> load_sweep_data(const SweepCommonArgs& args,
                                            std::uint64_t seed) {
  const bool split_mode = !args.data_path.empty();
  const bool file_mode = !args.train_path.empty() || !args.val_path.empty();
  if (split_mode == file_mode) {
    throw ConfigError("give either --data with --n-train/--n-val, or --train and --val");
  }
  if (split_mode) {
    if (args.n_train == 0 || args.n_val == 0) {
      throw ConfigError("--data mode requires --n-train and --n-val");
    }
    const Dataset full = derive_auto(args.data_path, MissingDataPolicy{}, true);
    return split(full, args.n_train, args.n_val, seed);
  }
  if (args.train_path.empty() || args.val_path.empty()) {
    throw ConfigError("--train and --val must be given together");
  }
  return {derive_auto(args.train_path, MissingDataPolicy{}, true),
          derive_auto(args.val_path, MissingDataPolicy{}, true)};
}

void write_sweep_outputs(const SweepResult& result, const SweepCommonArgs& args) {
  if (!args.out_csv.empty()) write_sweep_csv(result, args.out_csv);
  if (!args.out_json.empty()) write_sweep_json(result, args.out_json);
  for (std::size_t i = 0; i < result.parameter_values.size(); ++i) {
    std::cout << result.parameter_values[i] << ',' << format_double(result.scores[i]) << '\n';
  }
}

void run_sweep_k(const SweepCommonArgs& args, const std::vector<std::size_t>& k_values,
                 const GlobalOptions& global) {
  auto [train, val] = load_sweep_data(args, global.seed);
  SweepResult result = sweep_k(train, val, k_values, args.p,
                               {args.leaf_capacity, args.standardize, global.threads});
  result.config["seed"] = global.seed;
  write_sweep_outputs(result, args);
}

void run_sweep_size(const SweepCommonArgs& args, const std::vector<std::size_t>& sizes,
                    std::size_t k, const GlobalOptions& global) {
  std::pair<Dataset, Dataset> data = [&] {
    if (!args.data_path.empty() && args.n_train == 0) {
      // Pool mode: everything not in the validation set feeds the sweep.
      const Dataset full = derive_auto(args.data_path, MissingDataPolicy{}, true);
      if (args.n_val == 0 || args.n_val >= full.records.size()) {
        throw ConfigError("--data mode requires 0 < --n-val < dataset rows");
      }
      return split(full, full.records.size() - args.n_val, args.n_val, global.seed);
    }
    return load_sweep_data(args, global.seed);
  }();
  SweepResult result = sweep_size(data.first, data.second, sizes, k, args.p, global.seed,
                                  {args.leaf_capacity, args.standardize, global.threads});
  result.config["seed"] = global.seed;
  write_sweep_outputs(result, args);
}

struct BenchmarkArgs {
  std::string data_path;
  std::string train_path;
  std::string test_path;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::vector<std::string> predictors;
  std::string out_csv;
  std::string out_json;
  std::string dump_dir;
  BenchmarkOptions options;
};

void run_benchmark_cmd(BenchmarkArgs& args, const GlobalOptions& global) {
  const bool split_mode = !args.data_path.empty();
  const bool file_mode = !args.train_path.empty() || !args.test_path.empty();
  if (split_mode == file_mode) {
    throw ConfigError("give either --data with --n-train/--n-test, or --train and --test");
  }
  Dataset train;
  Dataset test;
  if (split_mode) {
    if (args.n_train == 0 || args.n_test == 0) {
      throw ConfigError("--data mode requires --n-train and --n-test");
    }
    const Dataset full = derive_auto(args.data_path, keep_all_policy(), true);
    std::tie(train, test) = split(full, args.n_train, args.n_test, global.seed);
  } else {
    if (args.train_path.empty() || args.test_path.empty()) {
      throw ConfigError("--train and --test must be given together");
    }
    train = derive_auto(args.train_path, keep_all_policy(), true);
    test = derive_auto(args.test_path, keep_all_policy(), true);
  }
  args.options.predictors =
      args.predictors.empty() ? known_predictors() : args.predictors;
  args.options.threads = global.threads;
  if (!args.dump_dir.empty()) args.options.dump_dir = args.dump_dir;
  args.options.extra_config["seed"] = global.seed;
  const BenchmarkTable table = run_benchmark(train, test, args.options);
  if (!args.out_csv.empty()) write_benchmark_csv(table, args.out_csv);
  if (!args.out_json.empty()) write_benchmark_json(table, args.out_json);
  for (const auto& row : table.rows) {
    std::cout << row.predictor << ',' << format_double(row.score) << ','
              << row.rows_evaluated << '\n';
  }
}

struct InferArgs {
  std::optional<double> score_ones;
  std::optional<double> score_zeroed;
  std::size_t n_bins = kNumBins;
  std::string labels_path;
  std::optional<std::size_t> bin;
};

void run_infer(const InferArgs& args) {
  const bool score_mode = args.score_ones.has_value() || args.score_zeroed.has_value();
  const bool label_mode = !args.labels_path.empty() || args.bin.has_value();
  if (score_mode == label_mode) {
    throw ConfigError(
        "give either --score-ones with --score-zeroed, or --labels with --bin");
  }
  double p = 0.0;
  if (score_mode) {
    if (!args.score_ones || !args.score_zeroed) {
      throw ConfigError("--score-ones and --score-zeroed must be given together");
    }
    p = infer_bin_proportion(*args.score_ones, *args.score_zeroed, args.n_bins);
  } else {
    if (args.labels_path.empty() || !args.bin) {
      throw ConfigError("--labels and --bin must be given together");
    }
    const auto labels = read_labels(args.labels_path);
    const auto [ones, zeroed] = histogram_probe_scores(labels, *args.bin);
    p = infer_bin_proportion(ones, zeroed);
  }
  std::cout << format_double(p) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CDF rainfall prediction pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions global;
  app.add_option("--seed", global.seed, "Random seed for generation, splits, and shuffles");
  app.add_option("--threads", global.threads, "Worker threads (results are thread-count independent)")
      ->check(CLI::Range(1u, 256u));

  GenerateArgs gen;
  auto* c_gen = app.add_subcommand("generate", "Generate a synthetic raw dataset");
  c_gen->add_option("--config", gen.config_path, "Key-value config file");
  c_gen->add_option("--out", gen.out_path, "Output raw CSV path")->required();
  c_gen->add_option("--rows", gen.rows, "Row count (overrides config)");
  c_gen->add_option("--p0", gen.p0, "Zero-rain probability (overrides config)");
  c_gen->add_option("--label-mean", gen.label_mean, "Positive label mean (overrides config)");
  c_gen->add_option("--rr1-noise", gen.rr1_noise, "RR1 noise level (overrides config)");
  c_gen->add_option("--rr2-noise", gen.rr2_noise, "RR2 noise level (overrides config)");
  c_gen->add_option("--rr3-noise", gen.rr3_noise, "RR3 noise level (overrides config)");

  DeriveArgs der;
  auto* c_der = app.add_subcommand("derive", "Derive per-row features from a raw dataset");
  c_der->add_option("--in", der.in_path, "Raw CSV input")->required();
  c_der->add_option("--out", der.out_path, "Derived feature CSV output")->required();
  c_der->add_flag("--keep-rr23", der.keep_rr23, "Retain the RR2/RR3 columns");

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Fit a model and write it to disk");
  c_tr->add_option("--model", tr.model, "voting | logistic | knn")->required();
  c_tr->add_option("--train", tr.train_path, "Labeled raw CSV")->required();
  c_tr->add_option("--out", tr.out_path, "Model output path")->required();
  c_tr->add_option("--outlier-mm", tr.outlier_mm, "Voting: label cap for outlier removal");
  c_tr->add_flag("--with-bias", tr.with_bias, "Voting: add an intercept column");
  c_tr->add_option("--iters", tr.logistic.max_iters, "Logistic: max iterations");
  c_tr->add_option("--lr", tr.logistic.learning_rate, "Logistic: initial step size");
  c_tr->add_option("--tol", tr.logistic.tolerance, "Logistic: gradient tolerance");
  c_tr->add_option("--l1", tr.logistic.l1_lambda, "Logistic: L1 penalty weight");
  c_tr->add_option("--leaf", tr.leaf_capacity, "knn: leaf bucket capacity");
  c_tr->add_flag("--standardize", tr.standardize, "knn: standardize features");

  PredictArgs pr;
  auto* c_pr = app.add_subcommand("predict", "Write CDF predictions for a test set");
  c_pr->add_option("--model", pr.model,
                   "norain | sigmoid | histogram | simpleavg | voting | logistic | knn")
      ->required();
  c_pr->add_option("--test", pr.test_path, "Raw CSV to predict")->required();
  c_pr->add_option("--out", pr.out_path, "Prediction CSV output")->required();
  c_pr->add_option("--train", pr.train_path, "Labeled raw CSV (histogram only)");
  c_pr->add_option("--model-file", pr.model_path, "Fitted model JSON (voting, logistic)");
  c_pr->add_option("--tree", pr.tree_path, "Tree file (knn)");
  c_pr->add_option("--k", pr.k, "knn: neighbor count");
  c_pr->add_option("--p", pr.p, "knn: distance order (inf for max-coordinate)");
  c_pr->add_flag("--normalize-full-hour", pr.normalize_full_hour,
                 "sigmoid: skip coverage normalization");

  ScoreArgs sc;
  auto* c_sc = app.add_subcommand("score", "Score predictions against labels");
  c_sc->add_option("--pred", sc.pred_path, "Prediction CSV")->required();
  c_sc->add_option("--labels", sc.labels_path, "CSV with a Label column")->required();
  c_sc->add_option("--out", sc.out_path, "Score report JSON output");

  SweepCommonArgs skc;
  std::vector<std::size_t> k_values;
  auto* c_sk = app.add_subcommand("sweep-k", "Validation score per k");
  c_sk->add_option("--data", skc.data_path, "Labeled raw CSV to split");
  c_sk->add_option("--n-train", skc.n_train, "Training rows (with --data)");
  c_sk->add_option("--n-val", skc.n_val, "Validation rows (with --data)");
  c_sk->add_option("--train", skc.train_path, "Pre-split labeled raw CSV");
  c_sk->add_option("--val", skc.val_path, "Pre-split labeled raw CSV");
  c_sk->add_option("--k", k_values, "k values, comma separated")
      ->required()
      ->delimiter(',');
  c_sk->add_option("--p", skc.p, "Distance order");
  c_sk->add_option("--leaf", skc.leaf_capacity, "Leaf bucket capacity");
  c_sk->add_flag("--standardize", skc.standardize, "Standardize features");
  c_sk->add_option("--out-csv", skc.out_csv, "Result CSV path");
  c_sk->add_option("--out-json", skc.out_json, "Result JSON path");

  SweepCommonArgs ssc;
  std::vector<std::size_t> sizes;
  std::size_t sweep_size_k = 150;
  auto* c_ss = app.add_subcommand("sweep-size", "Validation score per training-set size");
  c_ss->add_option("--data", ssc.data_path, "Labeled raw CSV to split");
  c_ss->add_option("--n-train", ssc.n_train, "Training pool rows (with --data; default: rest)");
  c_ss->add_option("--n-val", ssc.n_val, "Validation rows (with --data)");
  c_ss->add_option("--train", ssc.train_path, "Pre-split labeled raw CSV (training pool)");
  c_ss->add_option("--val", ssc.val_path, "Pre-split labeled raw CSV");
  c_ss->add_option("--sizes", sizes, "Training sizes, ascending, comma separated")
      ->required()
      ->delimiter(',');
  c_ss->add_option("--k", sweep_size_k, "Neighbor count");
  c_ss->add_option("--p", ssc.p, "Distance order");
  c_ss->add_option("--leaf", ssc.leaf_capacity, "Leaf bucket capacity");
  c_ss->add_flag("--standardize", ssc.standardize, "Standardize features");
  c_ss->add_option("--out-csv", ssc.out_csv, "Result CSV path");
  c_ss->add_option("--out-json", ssc.out_json, "Result JSON path");

  BenchmarkArgs bm;
  auto* c_bm = app.add_subcommand("benchmark", "Train and score a set of predictors");
  c_bm->add_option("--data", bm.data_path, "Labeled raw CSV to split");
  c_bm->add_option("--n-train", bm.n_train, "Training rows (with --data)");
  c_bm->add_option("--n-test", bm.n_test, "Test rows (with --data)");
  c_bm->add_option("--train", bm.train_path, "Pre-split labeled raw CSV");
  c_bm->add_option("--test", bm.test_path, "Pre-split labeled raw CSV");
  c_bm->add_option("--predictors", bm.predictors, "Comma-separated predictor names (default: all)")
      ->delimiter(',');
  c_bm->add_option("--k", bm.options.knn_k, "knn: neighbor count");
  c_bm->add_option("--p", bm.options.knn_p, "knn: distance order");
  c_bm->add_option("--leaf", bm.options.leaf_capacity, "knn: leaf bucket capacity");
  c_bm->add_flag("--standardize", bm.options.standardize, "knn: standardize features");
  c_bm->add_option("--outlier-mm", bm.options.outlier_mm, "Voting: label cap");
  c_bm->add_flag("--with-bias", bm.options.voting_bias, "Voting: intercept column");
  c_bm->add_option("--iters", bm.options.logistic.max_iters, "Logistic: max iterations");
  c_bm->add_option("--lr", bm.options.logistic.learning_rate, "Logistic: initial step size");
  c_bm->add_option("--tol", bm.options.logistic.tolerance, "Logistic: gradient tolerance");
  c_bm->add_option("--l1", bm.options.logistic.l1_lambda, "Logistic: L1 penalty weight");
  c_bm->add_flag("--normalize-full-hour", bm.options.sigmoid_full_hour,
                 "Sigmoid: skip coverage normalization");
  c_bm->add_option("--out-csv", bm.out_csv, "Result CSV path");
  c_bm->add_option("--out-json", bm.out_json, "Result JSON path");
  c_bm->add_option("--dump-dir", bm.dump_dir, "Directory for per-predictor prediction files");

  InferArgs inf;
  auto* c_inf = app.add_subcommand("infer-histogram",
                                   "Recover a label-CDF value from a probe score pair");
  c_inf->add_option("--score-ones", inf.score_ones, "Score of the all-ones prediction");
  c_inf->add_option("--score-zeroed", inf.score_zeroed,
                    "Score of the all-ones prediction with one column zeroed");
  c_inf->add_option("--bins", inf.n_bins, "Bin count used by the scores");
  c_inf->add_option("--labels", inf.labels_path, "CSV with a Label column");
  c_inf->add_option("--bin", inf.bin, "Bin index to probe");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (c_gen->parsed()) {
      run_generate(gen, global);
    } else if (c_der->parsed()) {
      run_derive(der);
    } else if (c_tr->parsed()) {
      run_train(tr);
    } else if (c_pr->parsed()) {
      run_predict(pr, global);
    } else if (c_sc->parsed()) {
      run_score(sc, global);
    } else if (c_sk->parsed()) {
      run_sweep_k(skc, k_values, global);
    } else if (c_ss->parsed()) {
      run_sweep_size(ssc, sizes, sweep_size_k, global);
    } else if (c_bm->parsed()) {
      run_benchmark_cmd(bm, global);
    } else if (c_inf->parsed()) {
      run_infer(inf);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
