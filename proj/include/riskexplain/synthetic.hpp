#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "riskexplain/dataset.hpp"
#include "json.hpp"

namespace riskexplain {

// Per-feature sampling distribution. Binary: Bernoulli(p). Categorical:
// weights over levels (uniform when empty). Numerical: normal(mean, sd)
// truncated to [min, max]; lab features may also go missing.
struct Marginal {
  double p = 0.5;
  std::vector<double> weights;
  std::optional<double> mean;
  std::optional<double> sd;
  double missing_rate = 0.0;
};

// One additive term of an outcome's logit. Numerical features enter
// standardized by their marginal, (x - mean) / sd; binary as 0/1; a
// categorical term names the level it indicates.
struct RiskTerm {
  std::string feature;
  std::optional<std::string> level;
  double weight = 0.0;
};

struct OutcomeRisk {
  double intercept = 0.0;
  std::vector<RiskTerm> terms;
};

struct GeneratorConfig {
  std::map<std::string, Marginal> marginals;
  std::map<std::string, OutcomeRisk> outcomes;
};

GeneratorConfig generator_config_from_json(const nlohmann::json& doc);
GeneratorConfig load_generator_config(const std::filesystem::path& path);
std::filesystem::path default_generator_path();

// Mean and sd actually used for a numerical feature (declared or defaulted).
std::pair<double, double> numerical_moments(const FeatureSpec& spec, const Marginal& marginal);
Marginal marginal_for(const GeneratorConfig& config, const FeatureSpec& spec);

struct SyntheticCohort {
  Dataset dataset;
  GeneratorConfig config;
};

// Deterministic in (schema, config, seed, n). Throws kValidation for n == 0
// or for terms referencing undeclared features/levels.
SyntheticCohort generate_synthetic_cohort(SchemaPtr schema, const GeneratorConfig& config,
                                          std::uint64_t seed, std::size_t n);

// Ground-truth probability of `outcome` for `record` under `config`.
double ground_truth_risk(const CohortSchema& schema, const GeneratorConfig& config,
                         const PatientRecord& record, std::string_view outcome);

}  // namespace riskexplain
