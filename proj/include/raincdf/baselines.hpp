#pragma once

// Simple predictors: the all-ones no-rain baseline, the label-histogram
// constant, and the sigmoid density around a normalized RR1 estimate.

#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <string_view>

#include "raincdf/common.hpp"
#include "raincdf/dataset.hpp"
#include "raincdf/ingest.hpp"
#include "raincdf/scoring.hpp"

namespace raincdf {

// Uniform interface: a fitted predictor maps one derived feature row to a
// CDF prediction. Implementations are immutable after construction and safe
// to call from many threads.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual CdfPrediction predict(std::span<const double> features) const = 0;
  virtual std::string_view name() const = 0;
};

// Predicts zero rainfall: P(y <= j) = 1 for every bin.
inline CdfPrediction no_rain_prediction() {
  CdfPrediction p;
  p.probs.fill(1.0);
  return p;
}

class NoRainPredictor final : public Predictor {
 public:
  CdfPrediction predict(std::span<const double>) const override { return no_rain_prediction(); }
  std::string_view name() const override { return "norain"; }
};

// Constant prediction: the empirical CDF of the training labels. This is
// the constant that minimizes the mean squared bin loss on its own
// training set.
struct HistogramModel {
  CdfPrediction cdf;
  std::size_t n_train = 0;
};

inline HistogramModel train_histogram(std::span<const double> labels) {
  if (labels.empty()) throw DataError("train_histogram: empty label set");
  return {empirical_cdf(labels), labels.size()};
}

class HistogramPredictor final : public Predictor {
 public:
  explicit HistogramPredictor(HistogramModel model) : model_(std::move(model)) {}

  CdfPrediction predict(std::span<const double>) const override { return model_.cdf; }
  std::string_view name() const override { return "histogram"; }

  const HistogramModel& model() const { return model_; }

 private:
  HistogramModel model_;
};

// Sigmoid around a point estimate: the RR1 mean normalized by the fraction
// of the hour the radar covered (floored at one scan minute), giving
// probs[j] = 1 / (1 + exp(-(j - e))). Unit slope per bin, deliberately
// untuned.
inline constexpr double kMinCoverage = 1.0 / 60.0;

inline CdfPrediction sigmoid_cdf(double rr1_mean, double coverage,
                                 bool normalize_full_hour = false) {
  const double e =
      normalize_full_hour ? rr1_mean : rr1_mean / std::max(coverage, kMinCoverage);
  CdfPrediction p;
  for (std::size_t j = 0; j < kNumBins; ++j) {
    p.probs[j] = 1.0 / (1.0 + std::exp(e - static_cast<double>(j)));
  }
  return p;
}

class SigmoidPredictor final : public Predictor {
 public:
  SigmoidPredictor(std::size_t rr1_index, std::size_t coverage_index,
                   bool normalize_full_hour = false)
      : rr1_index_(rr1_index),
        coverage_index_(coverage_index),
        normalize_full_hour_(normalize_full_hour) {}

  static SigmoidPredictor for_schema(const Dataset& data, bool normalize_full_hour = false) {
    return {data.require_feature("RR1"), data.require_feature(kCoverageColumn),
            normalize_full_hour};
  }

  CdfPrediction predict(std::span<const double> features) const override {
    return sigmoid_cdf(features[rr1_index_], features[coverage_index_], normalize_full_hour_);
  }
  std::string_view name() const override { return "sigmoid"; }

 private:
  std::size_t rr1_index_;
  std::size_t coverage_index_;
  bool normalize_full_hour_;
};

}  // namespace raincdf
