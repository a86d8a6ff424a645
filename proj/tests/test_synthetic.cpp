#include <cmath>
#include <cstddef>
#include <vector>

#include "catch2/catch_amalgamated.hpp"
#include "raincdf/ingest.hpp"
#include "raincdf/scoring.hpp"
#include "raincdf/synthetic.hpp"
#include "test_util.hpp"

using namespace raincdf;

namespace {

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const auto n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("generation is deterministic in config and seed") {
  SyntheticConfig cfg;
  cfg.rows = 200;
  const RawDataset a = generate_synthetic(cfg, 42);
  const RawDataset b = generate_synthetic(cfg, 42);
  CHECK(a == b);
  const RawDataset c = generate_synthetic(cfg, 43);
  CHECK(a != c);
}

TEST_CASE("rows have 4 to 12 scans at distinct descending integer minutes") {
  SyntheticConfig cfg;
  cfg.rows = 500;
  const RawDataset ds = generate_synthetic(cfg, 1);
  REQUIRE(ds.schema == synthetic_schema());
  for (const auto& rec : ds.records) {
    const auto& times = rec.cells[0].times;
    REQUIRE(times.size() >= 4);
    REQUIRE(times.size() <= 12);
    for (std::size_t i = 0; i < times.size(); ++i) {
      CHECK(times[i] == std::floor(times[i]));
      CHECK(times[i] >= 0.0);
      CHECK(times[i] <= 60.0);
      if (i > 0) CHECK(times[i] < times[i - 1]);
    }
    for (std::size_t c = 1; c < rec.cells.size(); ++c) {
      CHECK(rec.cells[c].times == times);
      CHECK(rec.cells[c].values.size() == times.size());
    }
  }
}

TEST_CASE("p0 = 1 yields only dry hours") {
  SyntheticConfig cfg;
  cfg.rows = 300;
  cfg.p0 = 1.0;
  const RawDataset ds = generate_synthetic(cfg, 5);
  for (const auto& rec : ds.records) CHECK(rec.label == 0.0);
}

TEST_CASE("p0 = 0 yields almost no dry hours") {
  SyntheticConfig cfg;
  cfg.rows = 2000;
  cfg.p0 = 0.0;
  const RawDataset ds = generate_synthetic(cfg, 5);
  std::size_t zeros = 0;
  for (const auto& rec : ds.records) {
    if (*rec.label == 0.0) ++zeros;
  }
  // Positive draws below 0.005 quantize to zero, so a handful is expected.
  CHECK(zeros < 20);
}

TEST_CASE("dry fraction tracks p0") {
  SyntheticConfig cfg;
  cfg.rows = 100000;
  const RawDataset ds = generate_synthetic(cfg, 7);
  std::size_t zeros = 0;
  for (const auto& rec : ds.records) {
    if (*rec.label == 0.0) ++zeros;
  }
  const double fraction = static_cast<double>(zeros) / static_cast<double>(cfg.rows);
  CHECK(fraction >= cfg.p0 - 0.01);
  CHECK(fraction <= cfg.p0 + 0.01);
}

TEST_CASE("labels stay inside the bin range") {
  SyntheticConfig cfg;
  cfg.rows = 5000;
  cfg.p0 = 0.0;
  cfg.label_mean = 40.0;  // fat tail to exercise the clamp
  const RawDataset ds = generate_synthetic(cfg, 11);
  bool clamped = false;
  for (const auto& rec : ds.records) {
    CHECK(*rec.label >= 0.0);
    CHECK(*rec.label <= 69.0);
    if (*rec.label == 69.0) clamped = true;
  }
  CHECK(clamped);
}

TEST_CASE("less noisy rain rates correlate more strongly with the label") {
  SyntheticConfig cfg;
  cfg.rows = 5000;
  const Dataset ds = generate_derived(cfg, 3, keep_all_policy());
  const auto rr1 = *ds.feature_index("RR1");
  const auto rr2 = *ds.feature_index("RR2");
  const auto rr3 = *ds.feature_index("RR3");
  std::vector<double> y, x1, x2, x3;
  for (const auto& rec : ds.records) {
    y.push_back(*rec.label);
    x1.push_back(rec.values[rr1]);
    x2.push_back(rec.values[rr2]);
    x3.push_back(rec.values[rr3]);
  }
  const double c1 = pearson(x1, y);
  const double c2 = pearson(x2, y);
  const double c3 = pearson(x3, y);
  CHECK(c1 > c2);
  CHECK(c2 > c3);
  CHECK(c1 > 0.99);
  CHECK(c3 > 0.5);
}

TEST_CASE("written files reparse to the exact generated dataset") {
  SyntheticConfig cfg;
  cfg.rows = 400;
  testutil::TempDir tmp;
  const auto path = tmp.file("synth.csv");
  generate_synthetic_file(cfg, 9, path);
  const RawDataset reparsed = parse_dataset(path, true);
  CHECK(reparsed == generate_synthetic(cfg, 9));
}

TEST_CASE("streaming derivation matches derive of the full dataset") {
  SyntheticConfig cfg;
  cfg.rows = 300;
  CHECK(generate_derived(cfg, 21) == derive_dataset(generate_synthetic(cfg, 21)));
  CHECK(generate_derived(cfg, 21, keep_all_policy()) ==
        derive_dataset(generate_synthetic(cfg, 21), keep_all_policy()));
}

TEST_CASE("closed-form label marginal matches the empirical label CDF") {
  SyntheticConfig cfg;
  cfg.rows = 100000;
  const RawDataset ds = generate_synthetic(cfg, 13);
  std::vector<double> labels;
  labels.reserve(ds.records.size());
  for (const auto& rec : ds.records) labels.push_back(*rec.label);
  const CdfPrediction empirical = empirical_cdf(labels);
  const CdfPrediction closed = label_marginal_cdf(cfg);
  CHECK(closed.probs[kNumBins - 1] == 1.0);
  CHECK(is_valid_cdf(closed));
  for (std::size_t j = 0; j < kNumBins; ++j) {
    CHECK(empirical.probs[j] == Catch::Approx(closed.probs[j]).margin(0.01));
  }
}

TEST_CASE("config validation rejects out-of-range parameters") {
  SyntheticConfig cfg;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);  // rows still 0
  cfg.rows = 10;
  CHECK_NOTHROW(cfg.validate());
  cfg.p0 = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.p0 = 0.5;
  cfg.label_mean = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.label_mean = 2.5;
  cfg.rr2_noise = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("config files parse key value pairs with comments") {
  testutil::TempDir tmp;
  const auto path = tmp.file("gen.cfg");
  testutil::write_file(path,
                       "# synthetic data knobs\n"
                       "rows 250\n"
                       "p0 = 0.5\n"
                       "label_mean\t3.5\n"
                       "rr1_noise 0.2  # inline comment\n"
                       "\n");
  const SyntheticConfig cfg = load_synthetic_config(path);
  CHECK(cfg.rows == 250);
  CHECK(cfg.p0 == 0.5);
  CHECK(cfg.label_mean == 3.5);
  CHECK(cfg.rr1_noise == 0.2);
  CHECK(cfg.rr2_noise == 0.6);  // untouched default

  testutil::write_file(path, "cadence 5\n");
  CHECK_THROWS_WITH(load_synthetic_config(path),
                    Catch::Matchers::ContainsSubstring("unknown key"));
  testutil::write_file(path, "p0 fast\n");
  CHECK_THROWS_WITH(load_synthetic_config(path),
                    Catch::Matchers::ContainsSubstring("bad value"));
  testutil::write_file(path, "rows 2.5\n");
  CHECK_THROWS_AS(load_synthetic_config(path), DataError);
}
