#pragma once

// Synthetic dataset generator.
//
// Labels follow a zero-inflated exponential: 0 with probability p0, else
// Exp(label_mean) clamped to [0, 69]. Each row gets 4..12 radar scans at
// distinct integer minutes. Rain-rate series are noisy multiples of the
// label, RR1 least noisy, so RR1 carries the strongest signal; reflectivity
// follows a log curve of the label; two extra channels are pure noise.
// Everything is quantized to two decimals so that written files reparse to
// bit-identical values.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "raincdf/common.hpp"
#include "raincdf/dataset.hpp"
#include "raincdf/ingest.hpp"

namespace raincdf {

struct SyntheticConfig {
  std::size_t rows = 0;
  double p0 = 0.8764;
  double label_mean = 2.5;
  double rr1_noise = 0.1;
  double rr2_noise = 0.6;
  double rr3_noise = 1.2;

  void validate() const {
    if (rows == 0) throw ConfigError("synthetic config: rows must be positive");
    if (!(p0 >= 0.0 && p0 <= 1.0)) {
      throw ConfigError("synthetic config: p0 must lie in [0, 1], got " + format_double(p0));
    }
    if (!(label_mean > 0.0)) throw ConfigError("synthetic config: label_mean must be positive");
    for (double nz : {rr1_noise, rr2_noise, rr3_noise}) {
      if (!(nz >= 0.0)) throw ConfigError("synthetic config: noise levels must be >= 0");
    }
  }
};

// Key-value text file, one `key value` or `key = value` pair per line,
// `#` comments allowed. Keys: rows, p0, label_mean, rr1_noise, rr2_noise,
// rr3_noise.
inline SyntheticConfig load_synthetic_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path.string());
  SyntheticConfig cfg;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    std::string_view text = detail::trim(line);
    if (const auto hash = text.find('#'); hash != std::string_view::npos) {
      text = detail::trim(text.substr(0, hash));
    }
    if (text.empty()) continue;
    std::size_t sep = text.find_first_of("= \t");
    if (sep == std::string_view::npos) {
      throw DataError(path.string() + ": line " + std::to_string(row) + ": expected key value");
    }
    const std::string_view key = text.substr(0, sep);
    std::string_view value = text.substr(sep);
    while (!value.empty() && (value.front() == '=' || value.front() == ' ' || value.front() == '\t')) {
      value.remove_prefix(1);
    }
    value = detail::trim(value);
    double v = 0.0;
    if (!parse_double(value, v)) {
      throw DataError(path.string() + ": line " + std::to_string(row) + ": bad value for " +
                      std::string(key));
    }
    if (key == "rows") {
      if (v < 0.0 || v != std::floor(v)) {
        throw DataError(path.string() + ": rows must be a non-negative integer");
      }
      cfg.rows = static_cast<std::size_t>(v);
    } else if (key == "p0") {
      cfg.p0 = v;
    } else if (key == "label_mean") {
      cfg.label_mean = v;
    } else if (key == "rr1_noise") {
      cfg.rr1_noise = v;
    } else if (key == "rr2_noise") {
      cfg.rr2_noise = v;
    } else if (key == "rr3_noise") {
      cfg.rr3_noise = v;
    } else {
      throw DataError(path.string() + ": line " + std::to_string(row) + ": unknown key " +
                      std::string(key));
    }
  }
  return cfg;
}

inline std::vector<std::string> synthetic_schema() {
  return {"TimeToEnd", "Reflectivity", "RR1", "RR2", "RR3", "Channel1", "Channel2"};
}

// Streaming row source with a fixed draw order, so records depend only on
// (config, seed, row index sequence).
class SyntheticGenerator {
 public:
  SyntheticGenerator(const SyntheticConfig& cfg, std::uint64_t seed)
      : cfg_(cfg), rng_(seed), schema_(synthetic_schema()) {
    cfg_.validate();
  }

  const std::vector<std::string>& schema() const { return schema_; }

  RawRecord next() {
    RawRecord rec;
    rec.id = next_id_++;
    rec.cells.resize(schema_.size());

    const std::size_t n_scans = 4 + static_cast<std::size_t>(rng_.below(9));
    std::array<bool, 61> used{};
    std::vector<double> times;
    times.reserve(n_scans);
    while (times.size() < n_scans) {
      const auto minute = static_cast<std::size_t>(rng_.below(61));
      if (used[minute]) continue;
      used[minute] = true;
      times.push_back(static_cast<double>(minute));
    }
    std::sort(times.begin(), times.end(), std::greater<>());

    double label = 0.0;
    if (rng_.uniform() >= cfg_.p0) {
      label = round2(std::min(rng_.exponential(cfg_.label_mean), 69.0));
    }
    rec.label = label;

    auto& tte = rec.cells[0];
    tte.times = times;
    tte.values = times;
    const double log_refl = 10.0 * std::log10(1.0 + label);
    for (std::size_t i = 0; i < n_scans; ++i) {
      push(rec.cells[1], times[i], round2(log_refl + 1.5 * rng_.normal()));
      push(rec.cells[2], times[i], round2(label * (1.0 + cfg_.rr1_noise * rng_.normal())));
      push(rec.cells[3], times[i], round2(label * (1.0 + cfg_.rr2_noise * rng_.normal())));
      push(rec.cells[4], times[i], round2(label * (1.0 + cfg_.rr3_noise * rng_.normal())));
      push(rec.cells[5], times[i], round2(rng_.normal()));
      push(rec.cells[6], times[i], round2(rng_.normal()));
    }
    return rec;
  }

 private:
  static double round2(double v) { return std::round(v * 100.0) / 100.0; }

  static void push(TimeSeriesCell& cell, double t, double v) {
    cell.times.push_back(t);
    cell.values.push_back(v);
  }

  SyntheticConfig cfg_;
  Rng rng_;
  std::vector<std::string> schema_;
  std::int64_t next_id_ = 0;
};

inline RawDataset generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
  SyntheticGenerator gen(cfg, seed);
  RawDataset ds;
  ds.schema = gen.schema();
  ds.has_labels = true;
  ds.records.reserve(cfg.rows);
  for (std::size_t i = 0; i < cfg.rows; ++i) ds.records.push_back(gen.next());
  return ds;
}

inline void generate_synthetic_file(const SyntheticConfig& cfg, std::uint64_t seed,
                                    const std::filesystem::path& path) {
  SyntheticGenerator gen(cfg, seed);
  DatasetWriter writer(path, gen.schema(), true);
  for (std::size_t i = 0; i < cfg.rows; ++i) writer.write(gen.next());
}

// Closed-form CDF of the generated label distribution, evaluated at the
// bin edges. Labels are quantized to two decimals, so P(label <= j) is the
// zero mass plus the exponential mass below j + 0.005. This is the
// constant prediction a Bayes-optimal featureless model would emit.
inline CdfPrediction label_marginal_cdf(const SyntheticConfig& cfg) {
  cfg.validate();
  CdfPrediction p;
  for (std::size_t j = 0; j + 1 < kNumBins; ++j) {
    const double tail = std::exp(-(static_cast<double>(j) + 0.005) / cfg.label_mean);
    p.probs[j] = cfg.p0 + (1.0 - cfg.p0) * (1.0 - tail);
  }
  p.probs[kNumBins - 1] = 1.0;
  return p;
}

// Generate and derive without materializing raw records.
inline Dataset generate_derived(const SyntheticConfig& cfg, std::uint64_t seed,
                                const MissingDataPolicy& policy = {}) {
  SyntheticGenerator gen(cfg, seed);
  Dataset out;
  out.schema = derived_schema(gen.schema(), policy);
  out.has_labels = true;
  out.records.reserve(cfg.rows);
  for (std::size_t i = 0; i < cfg.rows; ++i) {
    out.records.push_back(derive_features(gen.next(), gen.schema(), policy));
  }
  return out;
}

}  // namespace raincdf
