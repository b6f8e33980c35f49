#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "riskexplain/dataset.hpp"
#include "riskexplain/error.hpp"
#include "riskexplain/synthetic.hpp"
#include "support.hpp"

using namespace riskexplain;
using nlohmann::json;

namespace {

template <typename Fn>
Error capture(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e;
  }
  ADD_FAILURE() << "expected an Error";
  return Error(ErrorCode::kInternal, "none");
}

json minimal_schema_doc() {
  return {{"schema_version", 1},
          {"outcomes", {"y"}},
          {"features", {{{"name", "flag"}, {"kind", "binary"}, {"tags", {"comorbidity"}}}}}};
}

SchemaPtr race_schema() {
  std::vector<FeatureSpec> f;
  f.push_back(fixtures::categorical("race", {"African American", "White", "Other"}));
  f.push_back(fixtures::numerical("serum_glucose", 40, 600, true));
  return std::make_shared<const CohortSchema>(std::move(f), std::vector<std::string>{"y"});
}

}  // namespace

TEST(Schema, MinimalSchemaHasArityOne) {
  const auto schema = schema_from_json(minimal_schema_doc());
  EXPECT_EQ(schema.size(), 1u);
  EXPECT_EQ(schema.outcomes().size(), 1u);
  EXPECT_EQ(schema.feature(0).kind, FeatureKind::kBinary);
}

TEST(Schema, MutableDemographicIsRejected) {
  auto doc = minimal_schema_doc();
  doc["features"].push_back(
      {{"name", "age"}, {"kind", "numerical"}, {"min", 18}, {"max", 100}, {"mutable", true},
       {"tags", {"demographic"}}});
  const auto e = capture([&] { schema_from_json(doc); });
  EXPECT_EQ(e.code(), ErrorCode::kValidation);
  EXPECT_EQ(e.field(), "age");
}

TEST(Schema, DuplicateNameAndEmptyOutcomesRejected) {
  auto doc = minimal_schema_doc();
  doc["features"].push_back(doc["features"][0]);
  EXPECT_EQ(capture([&] { schema_from_json(doc); }).code(), ErrorCode::kValidation);
  auto empty = minimal_schema_doc();
  empty["outcomes"] = json::array();
  EXPECT_EQ(capture([&] { schema_from_json(empty); }).field(), "outcomes");
  EXPECT_EQ(capture([] { schema_from_json(json::array()); }).code(), ErrorCode::kParse);
}

TEST(Schema, DefaultSchemaRoundTripsThroughJson) {
  const auto schema = load_schema(default_schema_path());
  EXPECT_EQ(schema.outcomes().size(), 10u);
  EXPECT_EQ(schema.feature(schema.feature_index("race")).kind, FeatureKind::kCategorical);
  EXPECT_EQ(schema.feature(schema.feature_index("bmi")).kind, FeatureKind::kNumerical);
  EXPECT_EQ(schema.feature(schema.feature_index("chf")).kind, FeatureKind::kBinary);
  for (const auto& f : schema.features()) {
    if (f.is_mutable) EXPECT_TRUE(f.is_lab()) << f.name;
  }
  EXPECT_EQ(schema_from_json(schema_to_json(schema)), schema);
}

TEST(Csv, ThreeRowFile) {
  std::istringstream in("id,race,serum_glucose\na,White,100\nb,Other,\nc,African American,250.5\n");
  const auto ds = read_csv(in, race_schema(), false);
  ASSERT_EQ(ds.size(), 3u);
  EXPECT_FALSE(ds.record(1).values[1].has_value());
  EXPECT_DOUBLE_EQ(*ds.record(2).values[1], 250.5);
  EXPECT_EQ(*ds.record(2).values[0], 0.0);
}

TEST(Csv, UnknownLevelNamesRowColumnAndValue) {
  std::istringstream in("id,race,serum_glucose\na,White,100\nb,Martian,90\n");
  const auto e = capture([&] { read_csv(in, race_schema(), false); });
  EXPECT_EQ(e.code(), ErrorCode::kValidation);
  EXPECT_EQ(e.field(), "race");
  const std::string what = e.what();
  EXPECT_NE(what.find("Martian"), std::string::npos);
  EXPECT_NE(what.find("race"), std::string::npos);
  EXPECT_NE(what.find("row 2"), std::string::npos) << what;
}

TEST(Csv, RejectsBadCells) {
  auto bad = [](const std::string& text) {
    std::istringstream in(text);
    return capture([&] { read_csv(in, race_schema(), false); }).code();
  };
  EXPECT_EQ(bad("id,race,serum_glucose,extra\na,White,1,2\n"), ErrorCode::kValidation);
  EXPECT_EQ(bad("id,race\na,White\n"), ErrorCode::kValidation);
  EXPECT_EQ(bad("id,race,serum_glucose\na,White,700\n"), ErrorCode::kValidation);
  EXPECT_EQ(bad("id,race,serum_glucose\na,,100\n"), ErrorCode::kValidation);
  EXPECT_EQ(bad("id,race,serum_glucose\na,White,abc\n"), ErrorCode::kValidation);
}

TEST(Csv, SyntheticCohortRoundTrips) {
  const auto schema = std::make_shared<const CohortSchema>(load_schema(default_schema_path()));
  const auto cohort =
      generate_synthetic_cohort(schema, load_generator_config(default_generator_path()), 5, 10000);
  std::stringstream buffer;
  write_csv(buffer, cohort.dataset);
  const auto back = read_csv(buffer, schema, true);
  EXPECT_EQ(back, cohort.dataset);
}

TEST(Quantiles, HandWorkedInterpolation) {
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(i);
  // rank 1 + 0.01 * 99 = 1.99 sits between v1 = 1 and v2 = 2
  EXPECT_NEAR(quantile_sorted(v, 0.01), 1.99, 1e-12);
  EXPECT_NEAR(quantile_sorted(v, 0.99), 99.01, 1e-12);
  EXPECT_EQ(quantile_sorted(v, 0.0), 1.0);
  EXPECT_EQ(quantile_sorted(v, 1.0), 100.0);
}

TEST(Quantiles, PercentileBounds) {
  const auto schema = race_schema();
  auto make = [&](std::vector<Value> glucose) {
    std::vector<PatientRecord> rows;
    for (std::size_t i = 0; i < glucose.size(); ++i) rows.push_back({std::to_string(i), {1.0, glucose[i]}});
    return Dataset(schema, rows);
  };
  EXPECT_EQ(percentile_bounds(make({55.0, 55.0, 55.0}), "serum_glucose", 0.01, 0.99),
            std::make_pair(55.0, 55.0));
  EXPECT_EQ(percentile_bounds(make({70.0, std::nullopt, 50.0, 60.0}), "serum_glucose", 0.0, 1.0),
            std::make_pair(50.0, 70.0));
  EXPECT_EQ(capture([&] { percentile_bounds(make({std::nullopt}), "serum_glucose", 0.0, 1.0); }).code(),
            ErrorCode::kPrecondition);
  EXPECT_EQ(capture([&] { percentile_bounds(make({60.0}), "race", 0.0, 1.0); }).code(),
            ErrorCode::kPrecondition);

  std::vector<Value> values;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(40, 600);
  for (int i = 0; i < 57; ++i) values.push_back(u(rng));
  const auto ds = make(values);
  double prev = -1;
  for (int step = 0; step < 20; ++step) {
    const double q = step * 0.05;
    const auto [lo, hi] = percentile_bounds(ds, "serum_glucose", q, 1.0);
    EXPECT_GE(lo, prev);
    EXPECT_LE(hi, 600.0);
    prev = lo;
  }
}

TEST(Synthetic, SizeAndDeterminism) {
  const auto schema = fixtures::oracle_schema();
  const auto config = fixtures::oracle_generator();
  EXPECT_EQ(capture([&] { generate_synthetic_cohort(schema, config, 1, 0); }).code(),
            ErrorCode::kValidation);
  const auto one = generate_synthetic_cohort(schema, config, 1, 1);
  ASSERT_EQ(one.dataset.size(), 1u);
  validate_record(*schema, one.dataset.record(0));
  EXPECT_EQ(generate_synthetic_cohort(schema, config, 9, 500).dataset,
            generate_synthetic_cohort(schema, config, 9, 500).dataset);
  EXPECT_FALSE(generate_synthetic_cohort(schema, config, 9, 500).dataset ==
               generate_synthetic_cohort(schema, config, 10, 500).dataset);
}

TEST(Synthetic, UndeclaredFeatureRejected) {
  auto config = fixtures::oracle_generator();
  config.outcomes["risk"].terms.push_back({"potassium", std::nullopt, 1.0});
  const auto e = capture([&] { generate_synthetic_cohort(fixtures::oracle_schema(), config, 1, 10); });
  EXPECT_EQ(e.code(), ErrorCode::kValidation);
  EXPECT_EQ(e.field(), "potassium");
}

// Outcome rate against the analytic mean risk, integrating the logistic over
// the truncated normal glucose marginal with a fine midpoint rule.
TEST(Synthetic, OutcomeRateMatchesQuadrature) {
  auto config = fixtures::oracle_generator();
  config.outcomes["risk"] = {-0.5, {{"serum_glucose", std::nullopt, 2.5}}};
  const auto cohort = generate_synthetic_cohort(fixtures::oracle_schema(), config, 21, 10000);
  double rate = 0;
  for (std::size_t i = 0; i < cohort.dataset.size(); ++i) rate += cohort.dataset.label(i, 0);
  rate /= static_cast<double>(cohort.dataset.size());

  const double mean = 150, sd = 60, lo = 40, hi = 600;
  const int steps = 200000;
  double mass = 0, expected = 0;
  for (int s = 0; s < steps; ++s) {
    const double x = lo + (hi - lo) * (s + 0.5) / steps;
    const double z = (x - mean) / sd;
    const double density = std::exp(-0.5 * z * z);
    mass += density;
    expected += density / (1.0 + std::exp(-(-0.5 + 2.5 * z)));
  }
  expected /= mass;
  EXPECT_NEAR(rate, expected, 0.02);
}
