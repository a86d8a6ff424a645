#pragma once

// Multinomial logistic regression over rainfall bins.
//
// Class 0 is the reference with implicit zero parameters; theta holds one
// row per remaining class, each row a feature weight vector with the bias
// as its last entry. Labels map to classes by class(y) = min(ceil(y), k-1).
// Fitting is batch gradient descent from zero with a backtracking line
// search, so the loss never increases. CDF output is the cumulative sum of
// class probabilities.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "raincdf/baselines.hpp"
#include "raincdf/common.hpp"
#include "raincdf/dataset.hpp"
#include "raincdf/scoring.hpp"

namespace raincdf {

struct LogisticModel {
  std::size_t num_classes = kNumBins;
  std::size_t num_features = 0;
  Matrix theta;  // (num_classes - 1) x (num_features + 1), bias last
  double l1_lambda = 0.0;
};

inline std::size_t label_class(double y, std::size_t num_classes) {
  double c = std::ceil(y);
  if (c < 0.0) c = 0.0;
  const auto cls = static_cast<std::size_t>(c);
  return std::min(cls, num_classes - 1);
}

namespace detail {

// Logits with the reference class fixed at 0: out[0] = 0,
// out[c] = theta.row(c-1) . [x, 1].
inline void logits(const LogisticModel& model, std::span<const double> x,
                   std::vector<double>& out) {
  if (x.size() != model.num_features) {
    throw DataError("logistic: feature length " + std::to_string(x.size()) +
                    " does not match model dimension " + std::to_string(model.num_features));
  }
  out.assign(model.num_classes, 0.0);
  for (std::size_t c = 1; c < model.num_classes; ++c) {
    const auto row = model.theta.row(c - 1);
    double z = row[model.num_features];  // bias
    for (std::size_t d = 0; d < model.num_features; ++d) z += row[d] * x[d];
    out[c] = z;
  }
}

// In place: logits -> probabilities, max-subtracted for overflow safety.
// Returns log(sum exp(z - zmax)) + zmax for the likelihood.
inline double softmax_in_place(std::vector<double>& z) {
  double zmax = z[0];
  for (double v : z) zmax = std::max(zmax, v);
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - zmax);
    sum += v;
  }
  const double inv = 1.0 / sum;
  for (double& v : z) v *= inv;
  return std::log(sum) + zmax;
}

}  // namespace detail

inline std::vector<double> softmax_prob(const LogisticModel& model, std::span<const double> x) {
  std::vector<double> z;
  detail::logits(model, x, z);
  detail::softmax_in_place(z);
  return z;
}

struct NllGradient {
  double loss = 0.0;
  Matrix gradient;
};

inline double l1_penalty(const LogisticModel& model, double l1_lambda) {
  if (l1_lambda == 0.0) return 0.0;
  double sum = 0.0;
  for (std::size_t r = 0; r < model.theta.rows; ++r) {
    const auto row = model.theta.row(r);
    for (std::size_t d = 0; d < model.num_features; ++d) sum += std::abs(row[d]);
  }
  return l1_lambda * sum;
}

// Mean negative log-likelihood plus the L1 penalty on non-bias weights.
inline double nll_loss(const LogisticModel& model, const Dataset& data, double l1_lambda) {
  if (data.records.empty()) throw DataError("logistic: empty training data");
  std::vector<double> z;
  double loss = 0.0;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto& rec = data.records[i];
    if (!rec.label) throw DataError("record " + std::to_string(i) + " has no label");
    detail::logits(model, rec.values, z);
    const double cls_logit = z[label_class(*rec.label, model.num_classes)];
    const double log_norm = detail::softmax_in_place(z);
    loss += log_norm - cls_logit;
  }
  return loss / static_cast<double>(data.records.size()) + l1_penalty(model, l1_lambda);
}

// Loss and its gradient. The L1 term contributes sign(theta) on non-bias
// entries, with sign(0) taken as 0.
inline NllGradient nll_and_gradient(const LogisticModel& model, const Dataset& data,
                                    double l1_lambda) {
  if (data.records.empty()) throw DataError("logistic: empty training data");
  const std::size_t m = data.records.size();
  const std::size_t d = model.num_features;
  NllGradient out;
  out.gradient = Matrix(model.num_classes - 1, d + 1);
  std::vector<double> z;
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const auto& rec = data.records[i];
    if (!rec.label) throw DataError("record " + std::to_string(i) + " has no label");
    const std::size_t cls = label_class(*rec.label, model.num_classes);
    detail::logits(model, rec.values, z);
    const double cls_logit = z[cls];
    const double log_norm = detail::softmax_in_place(z);
    loss += log_norm - cls_logit;
    for (std::size_t c = 1; c < model.num_classes; ++c) {
      const double coeff = z[c] - (c == cls ? 1.0 : 0.0);
      auto grow = out.gradient.row(c - 1);
      for (std::size_t f = 0; f < d; ++f) grow[f] += coeff * rec.values[f];
      grow[d] += coeff;
    }
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  for (double& g : out.gradient.data) g *= inv_m;
  out.loss = loss * inv_m + l1_penalty(model, l1_lambda);
  if (l1_lambda != 0.0) {
    for (std::size_t r = 0; r < out.gradient.rows; ++r) {
      auto grow = out.gradient.row(r);
      const auto trow = model.theta.row(r);
      for (std::size_t f = 0; f < d; ++f) {
        if (trow[f] > 0.0) {
          grow[f] += l1_lambda;
        } else if (trow[f] < 0.0) {
          grow[f] -= l1_lambda;
        }
      }
    }
  }
  return out;
}

struct TrainConfig {
  std::size_t max_iters = 200;
  double learning_rate = 0.1;
  double tolerance = 1e-6;
  double l1_lambda = 0.0;

  void validate() const {
    if (max_iters < 1) throw ConfigError("train config: max_iters must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("train config: learning_rate must be > 0");
    if (!(tolerance > 0.0)) throw ConfigError("train config: tolerance must be > 0");
    if (!(l1_lambda >= 0.0)) throw ConfigError("train config: l1_lambda must be >= 0");
  }
};

inline LogisticModel fit_logistic(const Dataset& data, const TrainConfig& config,
                                  std::size_t num_classes = kNumBins) {
  config.validate();
  if (num_classes < 2 || num_classes > kNumBins) {
    throw ConfigError("logistic: num_classes must lie in [2, " + std::to_string(kNumBins) +
                      "]");
  }
  if (data.records.empty()) throw DataError("logistic: empty training data");

  LogisticModel model;
  model.num_classes = num_classes;
  model.num_features = data.schema.size();
  model.theta = Matrix(num_classes - 1, model.num_features + 1);
  model.l1_lambda = config.l1_lambda;

  NllGradient ng = nll_and_gradient(model, data, config.l1_lambda);
  if (!std::isfinite(ng.loss)) {
    throw NumericError("logistic: non-finite loss at iteration 0");
  }
  Matrix candidate = model.theta;
  for (std::size_t iter = 0; iter < config.max_iters; ++iter) {
    double gmax = 0.0;
    for (double g : ng.gradient.data) gmax = std::max(gmax, std::abs(g));
    if (gmax < config.tolerance) break;

    // Backtracking: halve the step until the loss strictly decreases.
    double step = config.learning_rate;
    bool accepted = false;
    for (int halvings = 0; halvings < 60; ++halvings) {
      for (std::size_t i = 0; i < candidate.data.size(); ++i) {
        candidate.data[i] = model.theta.data[i] - step * ng.gradient.data[i];
      }
      LogisticModel trial = model;
      trial.theta = candidate;
      const double trial_loss = nll_loss(trial, data, config.l1_lambda);
      if (std::isfinite(trial_loss) && trial_loss < ng.loss) {
        model.theta.data.swap(candidate.data);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no descent direction left at this scale
    ng = nll_and_gradient(model, data, config.l1_lambda);
    if (!std::isfinite(ng.loss)) {
      throw NumericError("logistic: non-finite loss at iteration " + std::to_string(iter + 1));
    }
  }
  return model;
}

inline CdfPrediction logistic_cdf(const LogisticModel& model, std::span<const double> x) {
  const std::vector<double> p = softmax_prob(model, x);
  CdfPrediction out;
  double cum = 0.0;
  const std::size_t top = std::min<std::size_t>(model.num_classes, kNumBins);
  for (std::size_t j = 0; j < top; ++j) {
    cum += p[j];
    out.probs[j] = std::min(cum, 1.0);
  }
  for (std::size_t j = model.num_classes; j < kNumBins; ++j) out.probs[j] = out.probs[j - 1];
  if (std::abs(out.probs[kNumBins - 1] - 1.0) > 1e-12) {
    throw NumericError("logistic: class probabilities sum to " +
                       format_double(out.probs[kNumBins - 1]) + ", expected 1");
  }
  out.probs[kNumBins - 1] = 1.0;
  return out;
}

class LogisticPredictor final : public Predictor {
 public:
  explicit LogisticPredictor(LogisticModel model) : model_(std::move(model)) {}

  CdfPrediction predict(std::span<const double> features) const override {
    return logistic_cdf(model_, features);
  }
  std::string_view name() const override { return "logistic"; }

  const LogisticModel& model() const { return model_; }

 private:
  LogisticModel model_;
};

inline void save_logistic_model(const LogisticModel& model,
                                const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["num_classes"] = model.num_classes;
  j["num_features"] = model.num_features;
  j["l1_lambda"] = model.l1_lambda;
  j["theta"] = model.theta.data;  // row-major, (num_classes-1) x (num_features+1)
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

inline LogisticModel load_logistic_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": invalid JSON: " + e.what());
  }
  LogisticModel model;
  try {
    model.num_classes = j.at("num_classes").get<std::size_t>();
    model.num_features = j.at("num_features").get<std::size_t>();
    model.l1_lambda = j.at("l1_lambda").get<double>();
    model.theta = Matrix(model.num_classes - 1, model.num_features + 1);
    model.theta.data = j.at("theta").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": bad logistic model: " + e.what());
  }
  if (model.num_classes < 2 ||
      model.theta.data.size() != (model.num_classes - 1) * (model.num_features + 1)) {
    throw DataError(path.string() + ": logistic model dimensions are inconsistent");
  }
  for (double v : model.theta.data) {
    if (!std::isfinite(v)) throw DataError(path.string() + ": non-finite model parameter");
  }
  return model;
}

}  // namespace raincdf
