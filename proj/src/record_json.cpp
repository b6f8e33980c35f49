#include "riskexplain/record_json.hpp"

#include <cmath>

#include "riskexplain/error.hpp"

namespace riskexplain {

using nlohmann::json;

Value value_from_json(const FeatureSpec& spec, const json& value, const std::string& path) {
  if (value.is_null()) return std::nullopt;
  switch (spec.kind) {
    case FeatureKind::kNumerical:
      if (!value.is_number()) throw Error(ErrorCode::kValidation, spec.name + " must be a number", path);
      return value.get<double>();
    case FeatureKind::kBinary:
      if (value.is_boolean()) return value.get<bool>() ? 1.0 : 0.0;
      if (value.is_number()) {
        const double v = value.get<double>();
        if (v == 0.0 || v == 1.0) return v;
      }
      if (value.is_string()) {
        const auto text = value.get<std::string>();
        for (std::size_t l = 0; l < spec.labels.size(); ++l) {
          if (spec.labels[l] == text) return static_cast<double>(l);
        }
      }
      throw Error(ErrorCode::kValidation,
                  spec.name + " must be 0/1, true/false, '" + spec.labels[0] + "' or '" +
                      spec.labels[1] + "'",
                  path);
    case FeatureKind::kCategorical:
      if (value.is_string()) {
        if (const auto l = spec.level_index(value.get<std::string>())) return static_cast<double>(*l);
      } else if (value.is_number_integer()) {
        const auto l = value.get<std::int64_t>();
        if (l >= 0 && static_cast<std::size_t>(l) < spec.levels.size()) return static_cast<double>(l);
      }
      throw Error(ErrorCode::kValidation, spec.name + " must be one of its declared levels", path);
  }
  throw Error(ErrorCode::kInternal, "unhandled feature kind", path);
}

json value_to_json(const FeatureSpec& spec, const Value& value) {
  if (!value) return nullptr;
  switch (spec.kind) {
    case FeatureKind::kNumerical:
      return *value;
    case FeatureKind::kBinary:
      return static_cast<int>(*value);
    case FeatureKind::kCategorical:
      return spec.levels.at(static_cast<std::size_t>(*value));
  }
  return nullptr;
}

PatientRecord record_from_json(const CohortSchema& schema, const json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::kValidation, "record must be an object", "record");
  PatientRecord r;
  if (doc.contains("id")) {
    const auto& id = doc.at("id");
    if (id.is_string()) {
      r.id = id.get<std::string>();
    } else if (id.is_number_integer()) {
      r.id = std::to_string(id.get<std::int64_t>());
    } else {
      throw Error(ErrorCode::kValidation, "record id must be text", "record.id");
    }
  }
  if (!doc.contains("values") || !doc.at("values").is_object()) {
    throw Error(ErrorCode::kValidation, "record needs a 'values' object", "record.values");
  }
  const auto& values = doc.at("values");
  for (const auto& [key, _] : values.items()) {
    if (!schema.find_feature(key)) {
      throw Error(ErrorCode::kUnknownFeature, "unknown feature '" + key + "'", "record.values." + key);
    }
  }
  r.values.resize(schema.size());
  for (std::size_t f = 0; f < schema.size(); ++f) {
    const auto& spec = schema.feature(f);
    const std::string path = "record.values." + spec.name;
    if (!values.contains(spec.name)) {
      if (spec.is_lab()) continue;
      throw Error(ErrorCode::kValidation, "missing value for " + spec.name, path);
    }
    r.values[f] = value_from_json(spec, values.at(spec.name), path);
  }
  try {
    validate_record(schema, r);
  } catch (const Error& e) {
    throw Error(e.code(), e.what(), e.field().empty() ? "record" : "record.values." + e.field());
  }
  return r;
}

json record_to_json(const CohortSchema& schema, const PatientRecord& record) {
  json values = json::object();
  for (std::size_t f = 0; f < schema.size(); ++f) {
    values[schema.feature(f).name] = value_to_json(schema.feature(f), record.values[f]);
  }
  return {{"id", record.id}, {"values", values}};
}

json prediction_to_json(const CohortSchema& schema, const RiskPrediction& prediction) {
  json risks = json::object();
  for (std::size_t k = 0; k < schema.outcomes().size(); ++k) {
    risks[schema.outcomes()[k]] = prediction[k];
  }
  return {{"risks", risks}};
}

json attribution_to_json(const Attribution& a) {
  json contributions = json::array();
  for (const auto& c : a.contributions) {
    contributions.push_back({{"feature", c.feature}, {"condition", c.condition}, {"value", c.value}});
  }
  json doc = {{"method", std::string(to_string(a.method))},
              {"outcome", a.outcome},
              {"base_value", a.base_value},
              {"prediction", a.prediction},
              {"contributions", contributions}};
  if (a.surrogate_r2) doc["surrogate_r2"] = *a.surrogate_r2;
  return doc;
}

json counterfactuals_to_json(const CounterfactualReport& report) {
  json results = json::array();
  for (const auto& r : report.results) {
    json changes = json::array();
    for (const auto& c : r.changes) {
      changes.push_back({{"feature", c.feature},
                         {"display_name", c.display_name},
                         {"unit", c.unit},
                         {"raw_value", c.raw_value ? json(*c.raw_value) : json(nullptr)},
                         {"new_value", c.new_value},
                         {"raw_text", c.raw_text},
                         {"new_text", c.new_text}});
    }
    results.push_back({{"changes", changes},
                       {"original_risk", r.original_risk},
                       {"new_risk", r.new_risk},
                       {"valid", r.valid},
                       {"l1", r.l1}});
  }
  return {{"outcome", report.outcome},
          {"original_risk", report.original_risk},
          {"threshold", report.threshold},
          {"direction", std::string(to_string(report.direction))},
          {"found", report.results.size()},
          {"results", results},
          {"evaluations", report.evaluations},
          {"elapsed_ms", report.elapsed_ms}};
}

json criteria_to_json(const SimilarityCriteria& c) {
  return {{"age_feature", c.age_feature},
          {"age_tolerance", c.age_tolerance},
          {"exact_match", c.exact_match},
          {"comorbidity_threshold", c.comorbidity_threshold}};
}

SimilarityCriteria criteria_from_json(const json& doc) {
  SimilarityCriteria c;
  if (doc.is_null()) return c;
  if (!doc.is_object()) throw Error(ErrorCode::kValidation, "criteria must be an object", "criteria");
  try {
    if (doc.contains("age_feature")) c.age_feature = doc.at("age_feature").get<std::string>();
    if (doc.contains("age_tolerance")) c.age_tolerance = doc.at("age_tolerance").get<double>();
    if (doc.contains("exact_match")) c.exact_match = doc.at("exact_match").get<std::vector<std::string>>();
    if (doc.contains("comorbidity_threshold")) {
      c.comorbidity_threshold = doc.at("comorbidity_threshold").get<double>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kValidation, std::string("criteria: ") + e.what(), "criteria");
  }
  return c;
}

json summary_to_json(const CohortSummary& s) {
  auto per_outcome = [&](const std::vector<double>& v) {
    json out = json::object();
    for (std::size_t k = 0; k < s.outcomes.size(); ++k) out[s.outcomes[k]] = v[k];
    return out;
  };
  return {{"matched", s.matched},
          {"index_risk", per_outcome(s.index_risk)},
          {"mean_predicted_risk",
           s.mean_predicted_risk ? per_outcome(*s.mean_predicted_risk) : json(nullptr)},
          {"observed_prevalence",
           s.observed_prevalence ? per_outcome(*s.observed_prevalence) : json(nullptr)},
          {"criteria", criteria_to_json(s.criteria)},
          {"matched_ids", s.matched_ids}};
}

json error_to_json(const Error& error) {
  return {{"error",
           {{"code", std::string(to_string(error.code()))},
            {"message", error.what()},
            {"field", error.field()}}}};
}

}  // namespace riskexplain
