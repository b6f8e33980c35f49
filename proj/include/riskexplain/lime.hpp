#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string_view>
#include <vector>

#include "riskexplain/attribution.hpp"
#include "riskexplain/forest.hpp"

namespace riskexplain {

// Training-data statistics the surrogate needs: quartile cut points for
// numerical features and the empirical value pool of every feature.
class LimeBackground {
 public:
  explicit LimeBackground(const Dataset& training);

  const CohortSchema& schema() const { return *schema_; }
  const std::array<double, 3>& quartiles(std::size_t feature) const { return quartiles_[feature]; }
  const std::vector<double>& pool(std::size_t feature) const { return pools_[feature]; }
  // Interpretable unit a value falls in: quartile bin (0..3), level, or 0/1.
  int unit_of(std::size_t feature, double value) const;

 private:
  SchemaPtr schema_;
  std::vector<std::array<double, 3>> quartiles_;
  std::vector<std::vector<double>> pools_;
};

struct LimeConfig {
  std::size_t n_samples = 5000;
  double kernel_width = 0.0;  // <= 0 means 0.75 * sqrt(feature count)
  std::size_t top_k = 10;
  double ridge_lambda = 1.0;
  std::uint64_t seed = 0;
  std::shared_ptr<const LimeBackground> background;
  Execution exec = Execution::kParallel;
};

// Condition text for the interpretable unit containing the record's value.
std::string lime_condition(const LimeBackground& background, std::size_t feature,
                           const Value& value, double filled);

Attribution explain_lime(const RandomForest& model, const PatientRecord& record,
                         std::string_view outcome, const LimeConfig& config);

}  // namespace riskexplain
