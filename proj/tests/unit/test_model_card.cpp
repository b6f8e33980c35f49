#include <gtest/gtest.h>

#include "riskexplain/error.hpp"
#include "riskexplain/model_card.hpp"
#include "support.hpp"

using namespace riskexplain;

namespace {

struct CardFixture {
  Dataset dev = fixtures::oracle_training(1200, 1);
  Dataset val = fixtures::oracle_training(600, 2);
  RandomForest model = train_forest(dev, {10, 6, 5, 0.0}, 3);

  CardConfig config(std::string stamp = "2026-01-01T00:00:00Z") const {
    CardConfig c;
    c.text = load_card_text(demo_card_template_path());
    c.importance.sample_size = 200;
    c.timestamp = stamp;
    return c;
  }
};

const CardFixture& fixture() {
  static const CardFixture f;
  return f;
}

}  // namespace

TEST(ModelCard, PrevalencesEqualLabelMeans) {
  const auto& f = fixture();
  const auto card = build_model_card(f.model, f.dev, f.val, f.config());
  ASSERT_EQ(card.outcomes.size(), 1u);
  std::size_t dev_pos = 0, val_pos = 0;
  for (std::size_t i = 0; i < f.dev.size(); ++i) dev_pos += f.dev.label(i, 0);
  for (std::size_t i = 0; i < f.val.size(); ++i) val_pos += f.val.label(i, 0);
  EXPECT_EQ(card.outcomes[0].prevalence_dev, static_cast<double>(dev_pos) / 1200.0);
  EXPECT_EQ(card.outcomes[0].prevalence_val, static_cast<double>(val_pos) / 600.0);
  const auto doc = card_to_json(card);
  EXPECT_EQ(doc["outcomes"][0]["prevalence_dev"].get<double>(), card.outcomes[0].prevalence_dev);
}

TEST(ModelCard, SectionsAndDemoText) {
  const auto& f = fixture();
  const auto card = build_model_card(f.model, f.dev, f.val, f.config());
  EXPECT_EQ(card.text.intended_users,
            (std::vector<std::string>{"Medical professionals", "Machine learning researchers"}));
  ASSERT_EQ(card.cohort.size(), 2u);
  EXPECT_EQ(card.cohort[0].encounters, 1200u);
  EXPECT_EQ(card.cohort[0].male + card.cohort[0].female, 1200u);
  EXPECT_TRUE(card.outcomes[0].auroc.has_value());
  EXPECT_EQ(card.subgroups.size(), 3u);
  for (const auto& s : card.subgroups) EXPECT_EQ(s.groups.size(), 2u);
  EXPECT_EQ(card.outcome_importance.size(), 1u);
  EXPECT_FALSE(card.overall_importance.ranking.empty());
  const auto doc = card_to_json(card);
  for (const char* key : {"text", "cohort", "outcomes", "importance", "provenance"}) {
    EXPECT_TRUE(doc.contains(key)) << key;
  }
  const auto md = render_markdown(card);
  EXPECT_NE(md.find("Medical professionals"), std::string::npos);
  const auto html = render_html(card);
  EXPECT_NE(html.find("<svg"), std::string::npos);
  EXPECT_EQ(html.find("</script><"), html.rfind("</script><"));
}

TEST(ModelCard, AgeAndSexColumnRecomputed) {
  const auto& f = fixture();
  const auto card = build_model_card(f.model, f.dev, f.val, f.config());
  double sum = 0, sq = 0;
  std::size_t female = 0;
  for (const auto& r : f.val.records()) {
    sum += *r.values[3];
    female += *r.values[4] == 0.0;
  }
  const double mean = sum / 600.0;
  for (const auto& r : f.val.records()) sq += (*r.values[3] - mean) * (*r.values[3] - mean);
  EXPECT_NEAR(card.cohort[1].age_mean, mean, 1e-9);
  EXPECT_NEAR(card.cohort[1].age_sd, std::sqrt(sq / 599.0), 1e-9);
  EXPECT_EQ(card.cohort[1].female, female);
}

TEST(ModelCard, IdenticalSplitsGiveIdenticalColumns) {
  const auto& f = fixture();
  const auto card = build_model_card(f.model, f.val, f.val, f.config());
  auto a = card.cohort[0], b = card.cohort[1];
  a.split = b.split = "";
  EXPECT_EQ(a.patients, b.patients);
  EXPECT_EQ(a.age_mean, b.age_mean);
  EXPECT_EQ(a.age_sd, b.age_sd);
  EXPECT_EQ(a.female_pct, b.female_pct);
  EXPECT_EQ(card.outcomes[0].prevalence_dev, card.outcomes[0].prevalence_val);
}

TEST(ModelCard, RegenerationIdenticalModuloTimestamp) {
  const auto& f = fixture();
  const auto one = card_to_json(build_model_card(f.model, f.dev, f.val, f.config("t1")));
  const auto same = card_to_json(build_model_card(f.model, f.dev, f.val, f.config("t1")));
  auto other = card_to_json(build_model_card(f.model, f.dev, f.val, f.config("t2")));
  EXPECT_EQ(one.dump(), same.dump());
  EXPECT_NE(one.dump(), other.dump());
  other["provenance"]["generated_at"] = "t1";
  EXPECT_EQ(one.dump(), other.dump());
}

TEST(ModelCard, RejectsUnlabeledOrForeignData) {
  const auto& f = fixture();
  const Dataset unlabeled(f.val.schema_ptr(), f.val.records());
  EXPECT_THROW(build_model_card(f.model, f.dev, unlabeled, f.config()), Error);
  const auto other = fixtures::width_schema(5);
  const RandomForest model(other, {DecisionTree::constant({0.5, 0.5})}, fixtures::midpoint_fill(*other));
  EXPECT_THROW(build_model_card(model, f.dev, f.val, f.config()), Error);
}
