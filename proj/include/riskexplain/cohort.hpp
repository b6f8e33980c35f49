#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "riskexplain/forest.hpp"

namespace riskexplain {

struct SimilarityCriteria {
  std::string age_feature = "age";
  double age_tolerance = 5.0;
  std::vector<std::string> exact_match = {"race", "sex", "surgery_type"};
  double comorbidity_threshold = 0.6;
};

void validate_criteria(const CohortSchema& schema, const SimilarityCriteria& criteria);

// Fraction of comorbidity-tagged binary features on which both records agree
// (presence and absence both count). 1.0 when the schema has none.
double comorbidity_agreement(const CohortSchema& schema, const PatientRecord& a,
                             const PatientRecord& b);

// Row indices of matching records in dataset order; the index record's own
// id is excluded.
std::vector<std::size_t> find_similar(const Dataset& dataset, const PatientRecord& index,
                                      const SimilarityCriteria& criteria);

struct CohortSummary {
  std::vector<std::string> outcomes;
  std::size_t matched = 0;
  std::vector<double> index_risk;
  std::optional<std::vector<double>> mean_predicted_risk;  // absent with no matches
  std::optional<std::vector<double>> observed_prevalence;  // absent with no matches or labels
  SimilarityCriteria criteria;
  std::vector<std::string> matched_ids;
};

CohortSummary cohort_summary(const RandomForest& model, const Dataset& dataset,
                             const PatientRecord& index, const SimilarityCriteria& criteria);

// Two-way partition of records. kLessEqual: feature <= value is group 0;
// kEquals: feature == level is group 0.
struct GroupingRule {
  enum class Op { kLessEqual, kEquals };
  std::string name;
  std::string feature;
  Op op = Op::kLessEqual;
  double value = 0.0;
  std::string level;
  std::array<std::string, 2> group_names;
};

std::vector<GroupingRule> default_subgroups();
// 0 or 1 for each record.
std::vector<int> assign_groups(const Dataset& dataset, const GroupingRule& rule);

enum class ImportanceMethod { kMeanAbsShap, kPermutation };

struct ImportanceOptions {
  ImportanceMethod method = ImportanceMethod::kMeanAbsShap;
  std::optional<std::string> outcome;  // averaged over outcomes when unset
  std::size_t sample_size = 2000;      // capped at the dataset size
  std::uint64_t seed = 0;
  std::size_t permutation_repeats = 5;
  Execution exec = Execution::kParallel;
};

struct RankedImportance {
  std::string group;
  std::size_t n_records = 0;
  std::vector<std::pair<std::string, double>> ranking;  // descending, ties in schema order
};

// Every view ranks the same seeded sample of up to sample_size records;
// a group's ranking uses the sampled records that fall in the group.

// Overall ranking first, then one per group when a grouping is given.
// Throws kPrecondition when a group has no sampled record.
std::vector<RankedImportance> global_importance(const RandomForest& model, const Dataset& dataset,
                                                const std::optional<GroupingRule>& grouping,
                                                const ImportanceOptions& options = {});

// One ranking per outcome; group names are the outcome names.
std::vector<RankedImportance> outcome_importance(const RandomForest& model, const Dataset& dataset,
                                                 const ImportanceOptions& options = {});

struct SubgroupRanking {
  std::string name;
  std::array<RankedImportance, 2> groups;
};

struct ImportanceReport {
  RankedImportance overall;
  std::vector<RankedImportance> per_outcome;
  std::vector<SubgroupRanking> subgroups;
};

// All of the above from a single attribution pass over the sample.
ImportanceReport importance_report(const RandomForest& model, const Dataset& dataset,
                                   const std::vector<GroupingRule>& groupings,
                                   bool per_outcome, const ImportanceOptions& options = {});

// Per-feature baseline AUROC minus shuffled AUROC (averaged over outcomes or
// for `outcome`); result[f][r] is the delta of repeat r.
std::vector<std::vector<double>> permutation_auroc_deltas(const RandomForest& model,
                                                          const Dataset& dataset,
                                                          const ImportanceOptions& options);

double spearman_correlation(const RankedImportance& a, const RankedImportance& b);

}  // namespace riskexplain
