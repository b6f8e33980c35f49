#include "riskexplain/synthetic.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "riskexplain/error.hpp"
#include "riskexplain/parallel.hpp"

namespace riskexplain {

using nlohmann::json;

GeneratorConfig generator_config_from_json(const json& doc) {
  GeneratorConfig config;
  try {
    const json marginals = doc.value("marginals", json::object());
    for (const auto& [name, m] : marginals.items()) {
      Marginal marginal;
      marginal.p = m.value("p", 0.5);
      marginal.weights = m.value("weights", std::vector<double>{});
      if (m.contains("mean")) marginal.mean = m.at("mean").get<double>();
      if (m.contains("sd")) marginal.sd = m.at("sd").get<double>();
      marginal.missing_rate = m.value("missing_rate", 0.0);
      config.marginals.emplace(name, std::move(marginal));
    }
    for (const auto& [name, o] : doc.at("outcomes").items()) {
      OutcomeRisk risk;
      risk.intercept = o.value("intercept", 0.0);
      for (const auto& t : o.value("terms", json::array())) {
        RiskTerm term;
        term.feature = t.at("feature").get<std::string>();
        if (t.contains("level")) term.level = t.at("level").get<std::string>();
        term.weight = t.at("weight").get<double>();
        risk.terms.push_back(std::move(term));
      }
      config.outcomes.emplace(name, std::move(risk));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("malformed generator config: ") + e.what());
  }
  return config;
}

GeneratorConfig load_generator_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open generator config " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::kParse, "generator config is not valid JSON");
  return generator_config_from_json(doc);
}

std::filesystem::path default_generator_path() {
  return std::filesystem::path(RISKEXPLAIN_DATA_DIR) / "default_generator.json";
}

Marginal marginal_for(const GeneratorConfig& config, const FeatureSpec& spec) {
  auto it = config.marginals.find(spec.name);
  return it == config.marginals.end() ? Marginal{} : it->second;
}

std::pair<double, double> numerical_moments(const FeatureSpec& spec, const Marginal& marginal) {
  const double mean = marginal.mean.value_or(0.5 * (spec.min + spec.max));
  const double sd = marginal.sd.value_or((spec.max - spec.min) / 6.0);
  return {mean, sd};
}

namespace {

void check_config(const CohortSchema& schema, const GeneratorConfig& config) {
  for (const auto& [name, marginal] : config.marginals) {
    const auto f = schema.find_feature(name);
    if (!f) throw Error(ErrorCode::kValidation, "marginal for undeclared feature '" + name + "'", name);
    const auto& spec = schema.feature(*f);
    if (spec.kind == FeatureKind::kCategorical && !marginal.weights.empty() &&
        marginal.weights.size() != spec.levels.size()) {
      throw Error(ErrorCode::kValidation, "weights for '" + name + "' must match its levels", name);
    }
    if (marginal.missing_rate > 0 && !spec.is_lab()) {
      throw Error(ErrorCode::kValidation, "only lab features may go missing", name);
    }
    if (spec.kind == FeatureKind::kNumerical && numerical_moments(spec, marginal).second <= 0) {
      throw Error(ErrorCode::kValidation, "sd for '" + name + "' must be positive", name);
    }
  }
  for (const auto& outcome : schema.outcomes()) {
    if (!config.outcomes.contains(outcome)) {
      throw Error(ErrorCode::kValidation, "no risk function for outcome '" + outcome + "'", outcome);
    }
  }
  for (const auto& [outcome, risk] : config.outcomes) {
    if (!schema.find_outcome(outcome)) {
      throw Error(ErrorCode::kValidation, "risk function for undeclared outcome '" + outcome + "'",
                  outcome);
    }
    for (const auto& term : risk.terms) {
      const auto f = schema.find_feature(term.feature);
      if (!f) {
        throw Error(ErrorCode::kValidation,
                    "coefficient references undeclared feature '" + term.feature + "'", term.feature);
      }
      const auto& spec = schema.feature(*f);
      if (spec.kind == FeatureKind::kCategorical) {
        if (!term.level || !spec.level_index(*term.level)) {
          throw Error(ErrorCode::kValidation,
                      "categorical term for '" + term.feature + "' needs a declared level",
                      term.feature);
        }
      } else if (term.level) {
        throw Error(ErrorCode::kValidation, "level given for non-categorical '" + term.feature + "'",
                    term.feature);
      }
    }
  }
}

double sample_truncated_normal(std::mt19937_64& rng, double mean, double sd, double lo, double hi) {
  std::normal_distribution<double> normal(mean, sd);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double v = normal(rng);
    if (v >= lo && v <= hi) return v;
  }
  // Essentially unreachable unless the box sits far in a tail.
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace

double ground_truth_risk(const CohortSchema& schema, const GeneratorConfig& config,
                         const PatientRecord& record, std::string_view outcome) {
  auto it = config.outcomes.find(std::string(outcome));
  if (it == config.outcomes.end()) {
    throw Error(ErrorCode::kUnknownOutcome, "no risk function for '" + std::string(outcome) + "'");
  }
  double logit = it->second.intercept;
  for (const auto& term : it->second.terms) {
    const std::size_t f = schema.feature_index(term.feature);
    const auto& spec = schema.feature(f);
    const Value& v = record.values[f];
    if (!v) continue;  // a missing lab contributes its (standardized) mean, 0
    switch (spec.kind) {
      case FeatureKind::kBinary: logit += term.weight * *v; break;
      case FeatureKind::kCategorical:
        if (static_cast<std::size_t>(*v) == *spec.level_index(*term.level)) logit += term.weight;
        break;
      case FeatureKind::kNumerical: {
        const auto [mean, sd] = numerical_moments(spec, marginal_for(config, spec));
        logit += term.weight * (*v - mean) / sd;
        break;
      }
    }
  }
  return 1.0 / (1.0 + std::exp(-logit));
}

SyntheticCohort generate_synthetic_cohort(SchemaPtr schema, const GeneratorConfig& config,
                                          std::uint64_t seed, std::size_t n) {
  if (n == 0) throw Error(ErrorCode::kValidation, "synthetic cohort size must be >= 1", "n");
  check_config(*schema, config);

  std::mt19937_64 rng(mix_seed(seed, 0));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n_features = schema->size();
  const std::size_t n_outcomes = schema->outcomes().size();

  std::vector<Marginal> marginals;
  for (const auto& spec : schema->features()) marginals.push_back(marginal_for(config, spec));

  std::vector<PatientRecord> records;
  std::vector<std::uint8_t> labels;
  records.reserve(n);
  labels.reserve(n * n_outcomes);
  const int width = static_cast<int>(std::to_string(n).size());
  for (std::size_t i = 0; i < n; ++i) {
    PatientRecord record;
    std::string digits = std::to_string(i + 1);
    record.id = "P" + std::string(static_cast<std::size_t>(width) - digits.size(), '0') + digits;
    record.values.resize(n_features);
    for (std::size_t f = 0; f < n_features; ++f) {
      const auto& spec = schema->feature(f);
      const auto& m = marginals[f];
      switch (spec.kind) {
        case FeatureKind::kBinary:
          record.values[f] = unit(rng) < m.p ? 1.0 : 0.0;
          break;
        case FeatureKind::kCategorical: {
          if (m.weights.empty()) {
            std::uniform_int_distribution<std::size_t> pick(0, spec.levels.size() - 1);
            record.values[f] = static_cast<double>(pick(rng));
          } else {
            std::discrete_distribution<std::size_t> pick(m.weights.begin(), m.weights.end());
            record.values[f] = static_cast<double>(pick(rng));
          }
          break;
        }
        case FeatureKind::kNumerical: {
          const auto [mean, sd] = numerical_moments(spec, m);
          const double v = sample_truncated_normal(rng, mean, sd, spec.min, spec.max);
          const bool missing = m.missing_rate > 0 && unit(rng) < m.missing_rate;
          if (missing) {
            record.values[f] = std::nullopt;
          } else {
            record.values[f] = v;
          }
          break;
        }
      }
    }
    for (std::size_t o = 0; o < n_outcomes; ++o) {
      const double p = ground_truth_risk(*schema, config, record, schema->outcomes()[o]);
      labels.push_back(unit(rng) < p ? 1 : 0);
    }
    records.push_back(std::move(record));
  }
  return SyntheticCohort{Dataset(std::move(schema), std::move(records), std::move(labels)), config};
}

}  // namespace riskexplain
