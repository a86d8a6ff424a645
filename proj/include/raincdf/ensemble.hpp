#pragma once

// Ensembles of the three past-hour rain-rate estimates: an equal-weight
// average and least-squares voting weights fitted with outlier rejection.
// Both turn their point estimate into a step CDF, floored at zero rain.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "raincdf/baselines.hpp"
#include "raincdf/common.hpp"
#include "raincdf/dataset.hpp"
#include "raincdf/least_squares.hpp"
#include "raincdf/scoring.hpp"

namespace raincdf {

// Default label cap: the world-record one-hour rainfall in mm. Rows above
// it are treated as gauge errors and excluded from fitting.
inline constexpr double kDefaultOutlierMm = 305.0;

struct RrIndices {
  std::size_t rr1 = 0;
  std::size_t rr2 = 0;
  std::size_t rr3 = 0;

  static RrIndices for_schema(const Dataset& data) {
    return {data.require_feature("RR1"), data.require_feature("RR2"),
            data.require_feature("RR3")};
  }
};

struct VotingWeights {
  std::vector<double> w;  // 3 entries, or 4 with a trailing bias weight
  std::size_t n_used = 0;
  double residual_norm = 0.0;
  bool with_bias = false;
};

inline VotingWeights fit_voting_weights(const Dataset& data,
                                        double outlier_threshold = kDefaultOutlierMm,
                                        bool with_bias = false) {
  const RrIndices idx = RrIndices::for_schema(data);
  const std::size_t n_cols = with_bias ? 4 : 3;

  std::vector<std::size_t> kept;
  kept.reserve(data.records.size());
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    if (!data.records[i].label) {
      throw DataError("record " + std::to_string(i) + " has no label");
    }
    if (*data.records[i].label <= outlier_threshold) kept.push_back(i);
  }
  if (kept.size() < std::max<std::size_t>(3, n_cols)) {
    throw DataError("voting fit: only " + std::to_string(kept.size()) +
                    " rows remain after outlier removal");
  }

  Matrix A(kept.size(), n_cols);
  std::vector<double> b(kept.size());
  for (std::size_t r = 0; r < kept.size(); ++r) {
    const auto& rec = data.records[kept[r]];
    A(r, 0) = rec.values[idx.rr1];
    A(r, 1) = rec.values[idx.rr2];
    A(r, 2) = rec.values[idx.rr3];
    if (with_bias) A(r, 3) = 1.0;
    b[r] = *rec.label;
  }

  VotingWeights out;
  out.w = solve_least_squares(A, b);
  out.n_used = kept.size();
  out.residual_norm = residual_norm(A, out.w, b);
  out.with_bias = with_bias;
  return out;
}

inline double simple_average_estimate(double rr1, double rr2, double rr3) {
  return std::max(0.0, (rr1 + rr2 + rr3) / 3.0);
}

class SimpleAveragePredictor final : public Predictor {
 public:
  explicit SimpleAveragePredictor(RrIndices idx) : idx_(idx) {}

  static SimpleAveragePredictor for_schema(const Dataset& data) {
    return SimpleAveragePredictor(RrIndices::for_schema(data));
  }

  CdfPrediction predict(std::span<const double> features) const override {
    return step_cdf(simple_average_estimate(features[idx_.rr1], features[idx_.rr2],
                                            features[idx_.rr3]));
  }
  std::string_view name() const override { return "simpleavg"; }

 private:
  RrIndices idx_;
};

inline double voting_estimate(const VotingWeights& weights, double rr1, double rr2,
                              double rr3) {
  double e = weights.w[0] * rr1 + weights.w[1] * rr2 + weights.w[2] * rr3;
  if (weights.with_bias) e += weights.w[3];
  return std::max(0.0, e);
}

class VotingPredictor final : public Predictor {
 public:
  VotingPredictor(VotingWeights weights, RrIndices idx)
      : weights_(std::move(weights)), idx_(idx) {}

  CdfPrediction predict(std::span<const double> features) const override {
    return step_cdf(voting_estimate(weights_, features[idx_.rr1], features[idx_.rr2],
                                    features[idx_.rr3]));
  }
  std::string_view name() const override { return "voting"; }

  const VotingWeights& weights() const { return weights_; }

 private:
  VotingWeights weights_;
  RrIndices idx_;
};

inline void save_voting_weights(const VotingWeights& weights,
                                const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["w"] = weights.w;
  j["n_used"] = weights.n_used;
  j["residual_norm"] = weights.residual_norm;
  j["with_bias"] = weights.with_bias;
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

inline VotingWeights load_voting_weights(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": invalid JSON: " + e.what());
  }
  VotingWeights weights;
  try {
    weights.w = j.at("w").get<std::vector<double>>();
    weights.n_used = j.at("n_used").get<std::size_t>();
    weights.residual_norm = j.at("residual_norm").get<double>();
    weights.with_bias = j.value("with_bias", false);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": bad voting model: " + e.what());
  }
  const std::size_t expected = weights.with_bias ? 4 : 3;
  if (weights.w.size() != expected) {
    throw DataError(path.string() + ": voting model has " + std::to_string(weights.w.size()) +
                    " weights, expected " + std::to_string(expected));
  }
  for (double v : weights.w) {
    if (!std::isfinite(v)) throw DataError(path.string() + ": non-finite voting weight");
  }
  return weights;
}

}  // namespace raincdf
