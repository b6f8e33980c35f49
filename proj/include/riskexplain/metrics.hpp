#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "riskexplain/forest.hpp"

namespace riskexplain {

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  bool operator==(const RocPoint&) const = default;
};

// Mann-Whitney U / (n_pos * n_neg) with tied pairs counted as 1/2.
// std::nullopt when either class is absent.
std::optional<double> auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

// Step polyline from (0,0) to (1,1); tied scores form one diagonal segment.
std::vector<RocPoint> roc_curve(std::span<const double> scores,
                                std::span<const std::uint8_t> labels);

struct OutcomeAuroc {
  std::string outcome;
  std::optional<double> auroc;  // undefined for single-class outcomes
  std::vector<RocPoint> roc;
};

std::vector<OutcomeAuroc> evaluate_auroc(const RandomForest& model, const Dataset& dataset,
                                         Execution exec = Execution::kParallel);

}  // namespace riskexplain
