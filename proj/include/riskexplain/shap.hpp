#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "riskexplain/attribution.hpp"
#include "riskexplain/forest.hpp"

namespace riskexplain {

inline constexpr std::size_t kMaxExactFeatures = 20;

struct ShapConfig {
  enum class Mode { kExact, kTree };
  Mode mode = Mode::kTree;
  std::size_t max_exact_features = 16;  // guard on the 2^d oracle, <= kMaxExactFeatures
};

// Shapley values of the path-dependent game over encoded columns, for every
// outcome at once. phi is row-major outputs x width.
struct EncodedShap {
  std::size_t width = 0;
  std::vector<double> phi;
  std::vector<double> base;  // v(empty set) per outcome

  double at(std::size_t outcome, std::size_t column) const { return phi[outcome * width + column]; }
};

// Expected tree output when only `known` columns follow the record and the
// rest descend both branches weighted by cover.
double path_dependent_value(const DecisionTree& tree, std::span<const double> x,
                            std::span<const std::uint8_t> known, std::size_t outcome);

// Polynomial-time recursion (extend/unwind of the permutation-weighted path).
EncodedShap tree_shap(const RandomForest& model, std::span<const double> x);
// Subset enumeration; throws kGuard when width exceeds max_features.
EncodedShap exact_shap(const RandomForest& model, std::span<const double> x,
                       std::size_t max_features);

Attribution explain_shap_tree(const RandomForest& model, const PatientRecord& record,
                              std::string_view outcome);
Attribution explain_shap_exact(const RandomForest& model, const PatientRecord& record,
                               std::string_view outcome, const ShapConfig& config = {});
Attribution explain_shap(const RandomForest& model, const PatientRecord& record,
                         std::string_view outcome, const ShapConfig& config = {});

// Per-record, per-feature SHAP over a batch: result[i] is outputs x features.
std::vector<std::vector<double>> shap_batch(const RandomForest& model,
                                            std::span<const PatientRecord> records,
                                            Execution exec = Execution::kParallel);

}  // namespace riskexplain
