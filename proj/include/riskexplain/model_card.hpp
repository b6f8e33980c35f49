#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "riskexplain/cohort.hpp"
#include "riskexplain/metrics.hpp"
#include "json.hpp"

namespace riskexplain {

struct CardText {
  std::string title = "Model card";
  std::string overview;
  std::string data_source;
  std::vector<std::string> references;
  std::vector<std::string> intended_users;
  std::vector<std::string> use_cases;
  std::vector<std::string> caveats;
  // Free text reproduced as-is, e.g. cohort figures reported elsewhere.
  std::optional<std::string> reported_cohort;
};

CardText card_text_from_json(const nlohmann::json& doc);
CardText load_card_text(const std::filesystem::path& path);
std::filesystem::path demo_card_template_path();

struct CohortColumn {
  std::string split;
  std::size_t patients = 0;
  std::size_t encounters = 0;
  double age_mean = 0.0;
  double age_sd = 0.0;
  std::size_t male = 0;
  std::size_t female = 0;
  double male_pct = 0.0;
  double female_pct = 0.0;
};

struct OutcomeCardEntry {
  std::string outcome;
  double prevalence_dev = 0.0;
  double prevalence_val = 0.0;
  std::optional<double> auroc;
  std::vector<RocPoint> roc;
};

struct SubgroupImportance {
  std::string name;
  std::vector<RankedImportance> groups;  // exactly two
};

struct ModelCard {
  CardText text;
  std::vector<CohortColumn> cohort;  // development, validation
  std::vector<OutcomeCardEntry> outcomes;
  RankedImportance overall_importance;
  // Importance per outcome, keyed like the tabs of a card viewer.
  std::vector<RankedImportance> outcome_importance;
  std::vector<SubgroupImportance> subgroups;
  std::string model_fingerprint;
  std::string dev_fingerprint;
  std::string val_fingerprint;
  std::string generated_at;
};

struct CardConfig {
  CardText text;
  std::vector<GroupingRule> subgroups = default_subgroups();
  ImportanceOptions importance;
  bool per_outcome_importance = true;
  std::string age_feature = "age";
  std::string sex_feature = "sex";  // binary; label 0 female, label 1 male by default
  std::string female_label = "female";
  std::optional<std::string> timestamp;  // defaults to the current UTC time
};

// Both datasets must be labeled and share the model's schema.
ModelCard build_model_card(const RandomForest& model, const Dataset& dev, const Dataset& val,
                           const CardConfig& config);

nlohmann::json card_to_json(const ModelCard& card);
std::string render_markdown(const ModelCard& card);
std::string render_html(const ModelCard& card);

}  // namespace riskexplain
