#pragma once

#include <string>

#include "riskexplain/attribution.hpp"
#include "riskexplain/cohort.hpp"
#include "riskexplain/counterfactual.hpp"
#include "riskexplain/dataset.hpp"
#include "riskexplain/forest.hpp"
#include "json.hpp"

namespace riskexplain {

// Records travel as {"id": ..., "values": {feature: value}}. Binary values
// may be 0/1, true/false or a label; categoricals are level names;
// numericals are numbers, or null for a missing lab.
Value value_from_json(const FeatureSpec& spec, const nlohmann::json& value,
                      const std::string& path);
nlohmann::json value_to_json(const FeatureSpec& spec, const Value& value);

PatientRecord record_from_json(const CohortSchema& schema, const nlohmann::json& doc);
nlohmann::json record_to_json(const CohortSchema& schema, const PatientRecord& record);

nlohmann::json prediction_to_json(const CohortSchema& schema, const RiskPrediction& prediction);
nlohmann::json attribution_to_json(const Attribution& attribution);
nlohmann::json counterfactuals_to_json(const CounterfactualReport& report);
nlohmann::json criteria_to_json(const SimilarityCriteria& criteria);
SimilarityCriteria criteria_from_json(const nlohmann::json& doc);
nlohmann::json summary_to_json(const CohortSummary& summary);
nlohmann::json error_to_json(const class Error& error);

}  // namespace riskexplain
