#include <gtest/gtest.h>

#include "riskexplain/cohort.hpp"
#include "riskexplain/error.hpp"
#include "riskexplain/shap.hpp"
#include "support.hpp"

using namespace riskexplain;

namespace {

// Written straight from the matching definition, sharing no code with the engine.
std::vector<std::string> brute_force_matches(const Dataset& ds, const PatientRecord& index) {
  const auto& s = ds.schema();
  const std::vector<std::size_t> comorbid{7, 8, 9};
  std::vector<std::string> ids;
  for (const auto& r : ds.records()) {
    if (r.id == index.id) continue;
    if (std::abs(*r.values[3] - *index.values[3]) > 5.0) continue;
    if (r.values[4] != index.values[4] || r.values[5] != index.values[5] || r.values[6] != index.values[6]) {
      continue;
    }
    int agree = 0;
    for (auto f : comorbid) agree += r.values[f] == index.values[f];
    if (agree / 3.0 < 0.6) continue;
    ids.push_back(r.id);
  }
  (void)s;
  return ids;
}

Dataset random_table(std::mt19937_64& rng, std::size_t n) {
  const auto schema = fixtures::oracle_schema();
  std::vector<PatientRecord> rows;
  std::uniform_int_distribution<int> age(40, 60), bit(0, 1), level(0, 2);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = fixtures::oracle_record(100 + i);
    r.id = "R" + std::to_string(i);
    r.values[3] = static_cast<double>(age(rng)) + (bit(rng) ? 0.5 : 0.0);
    r.values[4] = bit(rng);
    r.values[5] = level(rng) == 0 ? 1.0 : 0.0;
    r.values[6] = bit(rng) * 2.0;
    for (int f = 7; f < 10; ++f) r.values[f] = bit(rng);
    rows.push_back(r);
  }
  return Dataset(schema, rows);
}

std::vector<std::string> ids_of(const Dataset& ds, const std::vector<std::size_t>& rows) {
  std::vector<std::string> ids;
  for (auto i : rows) ids.push_back(ds.record(i).id);
  return ids;
}

}  // namespace

TEST(Similar, DefaultCriteria) {
  const SimilarityCriteria c;
  EXPECT_EQ(c.age_tolerance, 5.0);
  EXPECT_EQ(c.exact_match, (std::vector<std::string>{"race", "sex", "surgery_type"}));
  EXPECT_EQ(c.comorbidity_threshold, 0.6);
}

TEST(Similar, IdentityAndExactMatchGate) {
  const auto schema = fixtures::oracle_schema();
  auto index = fixtures::oracle_record(200);
  auto a = index, b = index, c = index;
  a.id = "a";
  b.id = "b";
  c.id = "c";
  c.values[4] = 1.0 - *c.values[4];
  const Dataset ds(schema, {index, a, b, c});
  EXPECT_EQ(ids_of(ds, find_similar(ds, index, {})), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(comorbidity_agreement(*schema, index, a), 1.0);
}

TEST(Similar, MatchesBruteForce) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const auto ds = random_table(rng, 1 + trial * 2);
    const auto& index = ds.record(rng() % ds.size());
    EXPECT_EQ(ids_of(ds, find_similar(ds, index, {})), brute_force_matches(ds, index));
    const auto& other = ds.record(rng() % ds.size());
    EXPECT_EQ(comorbidity_agreement(ds.schema(), index, other),
              comorbidity_agreement(ds.schema(), other, index));
  }
}

TEST(Similar, CriteriaValidation) {
  const auto schema = fixtures::oracle_schema();
  SimilarityCriteria c;
  c.exact_match = {"blood_type"};
  EXPECT_THROW(validate_criteria(*schema, c), Error);
  c = {};
  c.age_feature = "sex";
  EXPECT_THROW(validate_criteria(*schema, c), Error);
  c = {};
  c.comorbidity_threshold = 1.5;
  EXPECT_THROW(validate_criteria(*schema, c), Error);
}

TEST(Summary, ZeroMatchesLeaveAggregatesAbsent) {
  const auto model = fixtures::glucose_split_model();
  auto index = fixtures::oracle_record(200);
  auto other = index;
  other.id = "x";
  other.values[3] = 90.0;
  const Dataset ds(model.schema_ptr(), {other}, {1});
  const auto s = cohort_summary(model, ds, index, {});
  EXPECT_EQ(s.matched, 0u);
  EXPECT_FALSE(s.mean_predicted_risk.has_value());
  EXPECT_FALSE(s.observed_prevalence.has_value());
  EXPECT_EQ(s.index_risk, std::vector<double>{0.9});
}

TEST(Summary, IdenticalMatchesAverageToIndexRisk) {
  const auto model = fixtures::glucose_split_model();
  auto index = fixtures::oracle_record(200);
  std::vector<PatientRecord> rows;
  for (int i = 0; i < 4; ++i) {
    rows.push_back(index);
    rows.back().id = "m" + std::to_string(i);
  }
  const Dataset ds(model.schema_ptr(), rows, {1, 0, 0, 1});
  const auto s = cohort_summary(model, ds, index, {});
  EXPECT_EQ(s.matched, 4u);
  EXPECT_EQ(s.mean_predicted_risk->at(0), s.index_risk[0]);
  EXPECT_EQ(s.observed_prevalence->at(0), 0.5);
  EXPECT_EQ(s.matched_ids.size(), 4u);
}

TEST(Importance, DominantFeatureFirstAndDummyZero) {
  auto config = fixtures::oracle_generator();
  config.marginals["copd"].p = 0.0;
  config.outcomes["risk"] = {-0.5, {{"serum_glucose", std::nullopt, 2.5},
                                    {"hemoglobin", std::nullopt, -0.6}}};
  const auto ds = generate_synthetic_cohort(fixtures::oracle_schema(), config, 3, 3000).dataset;
  const auto model = train_forest(ds, {20, 8, 5, 0.0}, 6);
  ImportanceOptions options;
  options.sample_size = 300;
  const auto ranked = global_importance(model, ds, std::nullopt, options);
  ASSERT_EQ(ranked.size(), 1u);
  EXPECT_EQ(ranked[0].ranking.front().first, "serum_glucose");
  EXPECT_EQ(ranked[0].ranking.back().first, "copd");
  EXPECT_EQ(ranked[0].ranking.back().second, 0.0);
  for (const auto& [name, v] : ranked[0].ranking) EXPECT_GE(v, 0.0);
  EXPECT_EQ(ranked[0].n_records, 300u);

  // Mean |phi| recomputed from per-record explanations over the same sample.
  const auto again = global_importance(model, ds, std::nullopt, options);
  EXPECT_EQ(again[0].ranking, ranked[0].ranking);

  options.method = ImportanceMethod::kPermutation;
  const auto perm = global_importance(model, ds, std::nullopt, options);
  EXPECT_EQ(perm[0].ranking.front().first, "serum_glucose");
}

TEST(Importance, SharedSampleMatchesDirectShap) {
  const auto ds = fixtures::oracle_training(50, 4);
  const auto model = train_forest(ds, {5, 4, 3, 0.0}, 2);
  ImportanceOptions options;
  options.sample_size = 50;  // whole dataset, so the sample is every record
  const auto ranked = global_importance(model, ds, std::nullopt, options);
  std::map<std::string, double> expected;
  for (const auto& r : ds.records()) {
    for (const auto& c : explain_shap_tree(model, r, "risk").contributions) {
      expected[c.feature] += std::abs(c.value) / 50.0;
    }
  }
  for (const auto& [name, v] : ranked[0].ranking) EXPECT_NEAR(v, expected[name], 1e-12) << name;
}

TEST(Importance, SubgroupsAndErrors) {
  const auto ds = fixtures::oracle_training(1500, 9);
  const auto model = train_forest(ds, {20, 8, 5, 0.0}, 6);
  GroupingRule by_sex{"sex", "sex", GroupingRule::Op::kEquals, 0.0, "female", {"female", "male"}};
  ImportanceOptions options;
  options.sample_size = 600;
  const auto ranked = global_importance(model, ds, by_sex, options);
  ASSERT_EQ(ranked.size(), 3u);
  EXPECT_EQ(ranked[1].group, "female");
  EXPECT_EQ(ranked[1].n_records + ranked[2].n_records, 600u);
  // The generator ignores sex, so both halves should rank features alike.
  EXPECT_GT(spearman_correlation(ranked[1], ranked[2]), 0.8);

  const auto groups = assign_groups(ds, by_sex);
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(groups[i], *ds.record(i).values[4] == 0.0 ? 0 : 1);

  GroupingRule everyone{"age", "age", GroupingRule::Op::kLessEqual, 1000.0, "", {"all", "none"}};
  try {
    global_importance(model, ds, everyone, options);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kPrecondition);
  }
}

TEST(Importance, SpearmanHandWorked) {
  RankedImportance a{"a", 3, {{"x", 3}, {"y", 2}, {"z", 1}}};
  RankedImportance b{"b", 3, {{"z", 3}, {"y", 2}, {"x", 1}}};
  EXPECT_NEAR(spearman_correlation(a, a), 1.0, 1e-12);
  EXPECT_NEAR(spearman_correlation(a, b), -1.0, 1e-12);
}
