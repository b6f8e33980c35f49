#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "riskexplain/forest.hpp"

namespace riskexplain {

enum class Direction { kDecrease, kIncrease };

std::string_view to_string(Direction direction);

struct MutableFeature {
  std::size_t feature = 0;
  double low = 0.0;    // box bounds
  double high = 0.0;
  double scale = 1.0;  // median absolute deviation of the training values
};

// A prediction counts as high when risk >= threshold. Decrease moves a high
// record strictly below the threshold; increase moves a low record to >= it.
struct CfConstraints {
  std::vector<MutableFeature> features;
  double threshold = 0.5;
  Direction direction = Direction::kDecrease;
};

// Mutable lab features of the schema, boxed by training percentiles.
CfConstraints make_constraints(const Dataset& training, Direction direction,
                               double threshold = 0.5, double low_q = 0.01,
                               double high_q = 0.99);
CfConstraints make_constraints(const Dataset& training, const std::vector<std::string>& features,
                               Direction direction, double threshold = 0.5,
                               double low_q = 0.01, double high_q = 0.99);

struct CfSearchOptions {
  std::size_t k = 3;
  std::size_t budget = 20000;  // model evaluations
  std::uint64_t seed = 0;
  std::size_t population = 64;
  double proximity_weight = 0.5;
  double sparsity_weight = 0.1;
  double diversity_weight = 0.2;
  double mutation_scale = 0.1;     // sigma as a fraction of box width
  std::size_t stall_generations = 60;
  Execution exec = Execution::kParallel;
};

struct FeatureChange {
  std::string feature;
  std::string display_name;
  std::string unit;
  Value raw_value;
  double new_value = 0.0;
  std::string raw_text;  // display form incl. unit
  std::string new_text;
};

struct CounterfactualResult {
  std::vector<FeatureChange> changes;
  PatientRecord record;  // the modified record
  double original_risk = 0.0;
  double new_risk = 0.0;
  bool valid = false;
  double l1 = 0.0;  // sum of |change| / scale
};

struct CounterfactualReport {
  std::string outcome;
  double original_risk = 0.0;
  double threshold = 0.5;
  Direction direction = Direction::kDecrease;
  std::vector<CounterfactualResult> results;  // fewest changes first, then smallest l1
  std::size_t evaluations = 0;
  double elapsed_ms = 0.0;
};

// Genetic search over the mutable box followed by greedy reversion to a
// locally minimal change set. Returns only valid results, possibly none.
CounterfactualReport find_counterfactuals(const RandomForest& model, const PatientRecord& record,
                                          std::string_view outcome,
                                          const CfConstraints& constraints,
                                          const CfSearchOptions& options = {});

}  // namespace riskexplain
