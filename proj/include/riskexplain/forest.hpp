#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "riskexplain/dataset.hpp"
#include "riskexplain/encoder.hpp"
#include "riskexplain/parallel.hpp"

namespace riskexplain {

struct TreeNode {
  std::int32_t column = -1;  // -1 marks a leaf
  double threshold = 0.0;    // x[column] <= threshold goes left
  std::int32_t left = -1;
  std::int32_t right = -1;
  double cover = 0.0;  // training (bootstrap) samples reaching the node

  bool is_leaf() const { return column < 0; }
  bool operator==(const TreeNode&) const = default;
};

class DecisionTree {
 public:
  DecisionTree() = default;
  DecisionTree(std::size_t n_outputs, std::vector<TreeNode> nodes, std::vector<double> values);

  // A tree that is a single leaf.
  static DecisionTree constant(std::vector<double> leaf_values, double cover = 1.0);

  std::size_t n_outputs() const { return n_outputs_; }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& node(std::size_t i) const { return nodes_[i]; }
  // Per-output value of a node: class-1 frequency for leaves, the same
  // statistic over the node's samples for internal nodes.
  std::span<const double> values(std::size_t node) const {
    return {values_.data() + node * n_outputs_, n_outputs_};
  }
  const std::vector<double>& raw_values() const { return values_; }

  std::size_t leaf_index(std::span<const double> x) const;
  std::size_t depth() const;

  // Throws kValidation on broken structure.
  void validate(std::size_t width) const;

  bool operator==(const DecisionTree&) const = default;

 private:
  std::size_t n_outputs_ = 0;
  std::vector<TreeNode> nodes_;
  std::vector<double> values_;
};

struct ForestParams {
  int n_trees = 300;
  int max_depth = 16;
  int min_leaf = 5;
  // Fraction of encoded columns tried per split; <= 0 means sqrt(width).
  double features_per_split_fraction = 0.0;

  bool operator==(const ForestParams&) const = default;
};

struct TrainingMetadata {
  ForestParams params;
  std::uint64_t seed = 0;
  std::string dataset_fingerprint;
  std::size_t n_records = 0;

  bool operator==(const TrainingMetadata&) const = default;
};

struct RiskPrediction {
  std::vector<double> probabilities;  // one per schema outcome

  double operator[](std::size_t outcome) const { return probabilities[outcome]; }
  bool operator==(const RiskPrediction&) const = default;
};

class RandomForest {
 public:
  // `fill` holds the imputation value per schema feature (training medians
  // for labs, ignored elsewhere). `base_rates` may be empty, in which case
  // it is left empty until set by training.
  RandomForest(SchemaPtr schema, std::vector<DecisionTree> trees, std::vector<double> fill,
               std::vector<double> base_rates = {}, TrainingMetadata metadata = {});

  const CohortSchema& schema() const { return *schema_; }
  const SchemaPtr& schema_ptr() const { return schema_; }
  const FeatureEncoder& encoder() const { return encoder_; }
  const std::vector<DecisionTree>& trees() const { return trees_; }
  const std::vector<double>& imputation() const { return fill_; }
  const std::vector<double>& base_rates() const { return base_rates_; }
  const TrainingMetadata& metadata() const { return metadata_; }
  std::size_t n_outputs() const { return schema_->outcomes().size(); }
  std::size_t max_tree_depth() const { return max_depth_; }

  std::vector<double> encode(const PatientRecord& record) const;

  // Validates the record against the schema first (kSchemaMismatch).
  RiskPrediction predict_proba(const PatientRecord& record) const;
  // Mean of leaf vectors for an already encoded row; `out` has n_outputs entries.
  void predict_encoded(std::span<const double> x, std::span<double> out) const;
  double predict_encoded(std::span<const double> x, std::size_t outcome) const;

  // Rows are scored independently; parallel output equals serial output.
  std::vector<RiskPrediction> predict_batch(std::span<const PatientRecord> records,
                                            Execution exec = Execution::kParallel) const;

  // Whether any tree ever splits on one of the feature's encoded columns.
  bool uses_feature(std::size_t feature) const;

 private:
  SchemaPtr schema_;
  FeatureEncoder encoder_;
  std::vector<DecisionTree> trees_;
  std::vector<double> fill_;
  std::vector<double> base_rates_;
  TrainingMetadata metadata_;
  std::size_t max_depth_ = 0;
};

// Lab medians of the non-missing training values, (min + max) / 2 when none.
std::vector<double> imputation_values(const Dataset& dataset);

// Bootstrap trees grown greedily on summed Gini impurity across outcomes.
// Each tree draws from its own stream seeded by (seed, tree index), so the
// parallel and serial paths build identical forests.
RandomForest train_forest(const Dataset& dataset, const ForestParams& params, std::uint64_t seed,
                          Execution exec = Execution::kParallel);

}  // namespace riskexplain
