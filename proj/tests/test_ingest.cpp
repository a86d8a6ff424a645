#include <cmath>

#include "catch2/catch_amalgamated.hpp"
#include "raincdf/ingest.hpp"
#include "test_util.hpp"

using namespace raincdf;

namespace {

const std::string kHeader = "TimeToEnd,Reflectivity,RR1,RR2,RR3,Label\n";

RawDataset parse_text(const std::string& text, bool has_labels = true) {
  testutil::TempDir tmp;
  const auto path = tmp.file("data.csv");
  testutil::write_file(path, text);
  return parse_dataset(path, has_labels);
}

}  // namespace

TEST_CASE("parse pairs series values with scan times") {
  const RawDataset ds = parse_text(
      kHeader + "58.0 55.0 52.0 49.0 41.0,0.0 0.0 1.2 4.5 0.0,1 1 1 1 1,2 2 2 2 2,3 3 3 3 3,1.5\n");
  REQUIRE(ds.records.size() == 1);
  const auto& rec = ds.records[0];
  CHECK(rec.id == 0);
  CHECK(rec.label == 1.5);
  const auto refl = *ds.column_index("Reflectivity");
  CHECK(rec.cells[refl].times == std::vector<double>{58.0, 55.0, 52.0, 49.0, 41.0});
  CHECK(rec.cells[refl].values == std::vector<double>{0.0, 0.0, 1.2, 4.5, 0.0});
  const auto tte = *ds.column_index("TimeToEnd");
  CHECK(rec.cells[tte].values == rec.cells[tte].times);
}

TEST_CASE("nan tokens are dropped together with their paired times") {
  const RawDataset ds =
      parse_text(kHeader + "10 8 6,0 0 0,1.0 nan 3.0,0 0 0,0 0 0,0\n");
  const auto rr1 = *ds.column_index("RR1");
  CHECK(ds.records[0].cells[rr1].values == std::vector<double>{1.0, 3.0});
  CHECK(ds.records[0].cells[rr1].times == std::vector<double>{10.0, 6.0});
}

TEST_CASE("nan accepts any letter case") {
  const RawDataset ds =
      parse_text(kHeader + "10 8 6,0 0 0,1.0 NaN 3.0,0 NAN 0,nAn 0 0,0\n");
  CHECK(ds.records[0].cells[*ds.column_index("RR1")].values == std::vector<double>{1.0, 3.0});
  CHECK(ds.records[0].cells[*ds.column_index("RR3")].values == std::vector<double>{0.0, 0.0});
}

TEST_CASE("a nan scan time drops that index from every series") {
  const RawDataset ds =
      parse_text(kHeader + "10 nan 6,7 8 9,1 2 3,0 0 0,0 0 0,0\n");
  const auto tte = *ds.column_index("TimeToEnd");
  CHECK(ds.records[0].cells[tte].times == std::vector<double>{10.0, 6.0});
  const auto refl = *ds.column_index("Reflectivity");
  CHECK(ds.records[0].cells[refl].values == std::vector<double>{7.0, 9.0});
  CHECK(ds.records[0].cells[refl].times == std::vector<double>{10.0, 6.0});
}

TEST_CASE("an empty cell is a fully missing series") {
  const RawDataset ds = parse_text(kHeader + "10 8,0 0,,1 1,1 1,0\n");
  const auto rr1 = *ds.column_index("RR1");
  CHECK(ds.records[0].cells[rr1].empty());
}

TEST_CASE("parse errors name the offending row") {
  CHECK_THROWS_MATCHES(parse_text(kHeader + "10 8,0 0,1 2 3,0 0,0 0,0\n"), DataError,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("row 1") &&
                           Catch::Matchers::ContainsSubstring("RR1")));
  CHECK_THROWS_MATCHES(parse_text(kHeader + "10 8,0 0,1 x,0 0,0 0,0\n"), DataError,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("malformed float")));
  CHECK_THROWS_AS(parse_text(kHeader + "10 8,0 0,1 1,0 0,0 0\n"), DataError);
  CHECK_THROWS_AS(parse_text(kHeader + "10 8,0 0,1 1,0 0,0 0,-1\n"), DataError);
  CHECK_THROWS_AS(parse_text(kHeader + "10 80,0 0,1 1,0 0,0 0,0\n"), DataError);
  CHECK_THROWS_AS(parse_text(kHeader + "8 10,0 0,1 1,0 0,0 0,0\n"), DataError);
  CHECK_THROWS_AS(parse_text(kHeader + "10 8,0 0,1 inf,0 0,0 0,0\n"), DataError);
}

TEST_CASE("parse requires the core columns") {
  CHECK_THROWS_MATCHES(parse_text("TimeToEnd,RR1,RR2,Label\n1,2,3,0\n"), DataError,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("RR3")));
  CHECK_THROWS_AS(parse_text("RR1,RR2,RR3,Label\n1,2,3,0\n"), DataError);
  CHECK_THROWS_AS(parse_text("TimeToEnd,RR1,RR2,RR3\n1,2,3,4\n", true), DataError);
  CHECK_THROWS_AS(parse_text("TimeToEnd,RR1,RR1,RR2,RR3,Label\n1,2,2,3,4,0\n"), DataError);
}

TEST_CASE("unlabeled files parse when has_labels is off") {
  const RawDataset ds = parse_text("TimeToEnd,RR1,RR2,RR3\n10 8,1 1,2 2,3 3\n", false);
  CHECK_FALSE(ds.has_labels);
  CHECK_FALSE(ds.records[0].label.has_value());
  CHECK(ds.schema == std::vector<std::string>{"TimeToEnd", "RR1", "RR2", "RR3"});
}

TEST_CASE("parse, serialize, parse round-trips to an identical dataset") {
  const std::string text =
      kHeader +
      "58.0 55.0 52.0 49.0 41.0,0.0 0.0 1.2 4.5 0.0,1 nan 1 1 1,,3 3 nan 3 3,1.5\n" +
      "10 nan 6,7 8 9,1 2 3,0 0 0,nan nan nan,0\n" + "42,,0.25,1e-3,2,69\n";
  testutil::TempDir tmp;
  const auto first_path = tmp.file("first.csv");
  testutil::write_file(first_path, text);
  const RawDataset first = parse_dataset(first_path, true);

  const auto second_path = tmp.file("second.csv");
  write_dataset(first, second_path);
  const RawDataset second = parse_dataset(second_path, true);
  CHECK(first == second);

  const auto third_path = tmp.file("third.csv");
  write_dataset(second, third_path);
  CHECK(testutil::read_file(second_path) == testutil::read_file(third_path));
}

TEST_CASE("derive averages each retained series") {
  const RawDataset ds = parse_text(
      kHeader + "58.0 55.0 52.0 49.0 41.0,0.0 0.0 1.2 4.5 0.0,1 1 1 1 2,9 9 9 9 9,9 9 9 9 9,1.5\n");
  const MissingDataPolicy policy{};
  CHECK(derived_schema(ds.schema, policy) ==
        std::vector<std::string>{"Coverage", "Reflectivity", "RR1"});
  const FeatureVector fv = derive_features(ds.records[0], ds.schema, policy);
  REQUIRE(fv.values.size() == 3);
  CHECK(fv.values[0] == Catch::Approx(17.0 / 60.0).epsilon(1e-15));
  CHECK(fv.values[1] == Catch::Approx(1.14).epsilon(1e-15));
  CHECK(fv.values[2] == Catch::Approx(1.2).epsilon(1e-15));
  CHECK(fv.label == 1.5);
}

TEST_CASE("derive fills empty cells with the policy constant") {
  const RawDataset ds = parse_text(kHeader + ",,,,,0\n");
  const FeatureVector fv = derive_features(ds.records[0], ds.schema, MissingDataPolicy{});
  for (double v : fv.values) CHECK(v == 0.0);

  MissingDataPolicy filled;
  filled.fill_value = 7.5;
  const FeatureVector fv2 = derive_features(ds.records[0], ds.schema, filled);
  CHECK(fv2.values[0] == 0.0);  // empty coverage stays 0
  CHECK(fv2.values[1] == 7.5);
  CHECK(fv2.values[2] == 7.5);
}

TEST_CASE("dropped columns never appear in the derived schema") {
  const RawDataset ds = parse_text(kHeader + "10 8,0 0,1 1,2 2,3 3,0\n");
  const Dataset derived = derive_dataset(ds, MissingDataPolicy{});
  CHECK_FALSE(derived.feature_index("RR2").has_value());
  CHECK_FALSE(derived.feature_index("RR3").has_value());
  CHECK(derived.has_labels);
  REQUIRE(derived.records.size() == 1);
  for (double v : derived.records[0].values) CHECK(std::isfinite(v));

  const Dataset full = derive_dataset(ds, keep_all_policy());
  CHECK(full.feature_index("RR2").has_value());
  CHECK(full.schema.size() == 5);
}

TEST_CASE("streaming derive matches whole-file derive") {
  const std::string text = kHeader + "10 8,0 0,1 1,2 2,3 3,0\n42 7,1 2,3 nan,,0 0,2.5\n";
  testutil::TempDir tmp;
  const auto path = tmp.file("d.csv");
  testutil::write_file(path, text);
  const Dataset a = derive_dataset(parse_dataset(path, true), MissingDataPolicy{});
  const Dataset b = derive_file(path, true, MissingDataPolicy{});
  CHECK(a == b);
  const auto [std_view, full_view] = derive_file_both(path, true);
  CHECK(std_view == a);
  CHECK(full_view == derive_dataset(parse_dataset(path, true), keep_all_policy()));
}

TEST_CASE("feature CSV round-trips") {
  const RawDataset raw = parse_text(kHeader + "10 8,0.5 0.25,1 1,2 2,3 3,0.07\n");
  const Dataset derived = derive_dataset(raw, keep_all_policy());
  testutil::TempDir tmp;
  const auto path = tmp.file("features.csv");
  write_feature_dataset(derived, path);
  CHECK(read_feature_dataset(path) == derived);
}

TEST_CASE("split partitions rows disjointly and deterministically") {
  Dataset ds;
  ds.schema = {"A"};
  ds.has_labels = true;
  for (int i = 0; i < 133; ++i) {
    ds.records.push_back({{static_cast<double>(i)}, static_cast<double>(i)});
  }
  const auto [train, val] = split(ds, 33, 100, 9);
  CHECK(train.records.size() == 33);
  CHECK(val.records.size() == 100);

  std::vector<bool> seen(133, false);
  for (const auto& r : train.records) seen[static_cast<std::size_t>(r.values[0])] = true;
  for (const auto& r : val.records) {
    const auto idx = static_cast<std::size_t>(r.values[0]);
    CHECK_FALSE(seen[idx]);
    seen[idx] = true;
  }
  std::size_t covered = 0;
  for (bool b : seen) covered += b ? 1 : 0;
  CHECK(covered == 133);

  const auto [train2, val2] = split(ds, 33, 100, 9);
  CHECK(train == train2);
  CHECK(val == val2);
  const auto [train3, _] = split(ds, 33, 100, 10);
  CHECK(train != train3);
}

TEST_CASE("split accepts an empty validation side and rejects oversubscription") {
  Dataset ds;
  ds.schema = {"A"};
  for (int i = 0; i < 10; ++i) ds.records.push_back({{static_cast<double>(i)}, 0.0});
  const auto [train, val] = split(ds, 10, 0, 0);
  CHECK(train.records.size() == 10);
  CHECK(val.records.empty());
  CHECK_THROWS_AS(split(ds, 8, 3, 0), ConfigError);
}
