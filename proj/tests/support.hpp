#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "riskexplain/forest.hpp"
#include "riskexplain/synthetic.hpp"

namespace riskexplain::fixtures {

inline FeatureSpec numerical(std::string name, double lo, double hi, bool lab = false,
                             int precision = 1) {
  FeatureSpec f;
  f.name = name;
  f.display_name = std::move(name);
  f.kind = FeatureKind::kNumerical;
  f.min = lo;
  f.max = hi;
  f.precision = precision;
  if (lab) {
    f.tags = {FeatureTag::kLab};
    f.is_mutable = true;
    f.unit = "mg/dL";
  }
  return f;
}

inline FeatureSpec binary(std::string name, FeatureTag tag,
                          std::vector<std::string> labels = {"no", "yes"}) {
  FeatureSpec f;
  f.name = name;
  f.display_name = std::move(name);
  f.kind = FeatureKind::kBinary;
  f.labels = std::move(labels);
  f.tags = {tag};
  return f;
}

inline FeatureSpec categorical(std::string name, std::vector<std::string> levels,
                               FeatureTag tag = FeatureTag::kDemographic) {
  FeatureSpec f;
  f.name = name;
  f.display_name = std::move(name);
  f.kind = FeatureKind::kCategorical;
  f.levels = std::move(levels);
  f.tags = {tag};
  return f;
}

// Small clinical-looking schema: glucose is feature 0 and encoded column 0.
inline SchemaPtr oracle_schema() {
  std::vector<FeatureSpec> f;
  f.push_back(numerical("serum_glucose", 40, 600, true, 0));
  f.push_back(numerical("hemoglobin", 4, 20, true, 1));
  f.push_back(numerical("serum_calcium", 5, 13, true, 1));
  f.push_back(numerical("age", 18, 100));
  f.push_back(binary("sex", FeatureTag::kDemographic, {"female", "male"}));
  f.push_back(categorical("race", {"African American", "White", "Other"}));
  f.push_back(categorical("surgery_type", {"general", "orthopedic", "vascular"}, FeatureTag::kSurgery));
  f.push_back(binary("diabetes", FeatureTag::kComorbidity));
  f.push_back(binary("hypertension", FeatureTag::kComorbidity));
  f.push_back(binary("copd", FeatureTag::kComorbidity));
  return std::make_shared<const CohortSchema>(std::move(f), std::vector<std::string>{"risk"});
}

inline GeneratorConfig oracle_generator() {
  GeneratorConfig c;
  c.marginals["serum_glucose"] = {0.5, {}, 150.0, 60.0, 0.0};
  c.marginals["hemoglobin"] = {0.5, {}, 12.5, 2.0, 0.0};
  c.marginals["serum_calcium"] = {0.5, {}, 9.0, 0.8, 0.0};
  c.marginals["age"] = {0.5, {}, 55.0, 15.0, 0.0};
  c.outcomes["risk"] = {-1.0, {{"serum_glucose", std::nullopt, 1.0}}};
  return c;
}

inline Dataset oracle_training(std::size_t n, std::uint64_t seed) {
  return generate_synthetic_cohort(oracle_schema(), oracle_generator(), seed, n).dataset;
}

inline std::vector<double> midpoint_fill(const CohortSchema& schema) {
  std::vector<double> fill;
  for (const auto& f : schema.features()) {
    fill.push_back(f.kind == FeatureKind::kNumerical ? (f.min + f.max) / 2.0 : 0.0);
  }
  return fill;
}

// One tree: glucose <= 150 -> 0.1, else 0.9.
inline RandomForest glucose_split_model(SchemaPtr schema = oracle_schema()) {
  std::vector<TreeNode> nodes(3);
  nodes[0] = {0, 150.0, 1, 2, 200.0};
  nodes[1].cover = 100.0;
  nodes[2].cover = 100.0;
  DecisionTree tree(1, nodes, {0.5, 0.1, 0.9});
  auto fill = midpoint_fill(*schema);
  return RandomForest(schema, {tree}, fill);
}

inline RandomForest constant_model(double value, SchemaPtr schema = oracle_schema()) {
  auto fill = midpoint_fill(*schema);
  return RandomForest(schema, {DecisionTree::constant({value}, 50.0)}, fill);
}

inline PatientRecord oracle_record(double glucose) {
  PatientRecord r;
  r.id = "index";
  r.values = {glucose, 11.0, 8.8, 60.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0};
  return r;
}

// Random tree over `width` columns with values in [0, 1]: random column and
// threshold per internal node, integer covers split at random.
class RandomTreeMaker {
 public:
  RandomTreeMaker(std::uint64_t seed, std::size_t width, std::size_t outputs)
      : rng_(seed), width_(width), outputs_(outputs) {}

  DecisionTree make(int max_depth) {
    nodes_.clear();
    values_.clear();
    grow(0, max_depth, std::uniform_int_distribution<int>(20, 400)(rng_));
    return DecisionTree(outputs_, nodes_, values_);
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  std::size_t grow(int depth, int max_depth, int cover) {
    const std::size_t index = nodes_.size();
    nodes_.emplace_back();
    values_.resize(values_.size() + outputs_, 0.0);
    nodes_[index].cover = cover;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const bool leaf = depth == max_depth || cover < 2 || (depth > 0 && unit(rng_) < 0.2);
    if (leaf) {
      for (std::size_t k = 0; k < outputs_; ++k) values_[index * outputs_ + k] = unit(rng_);
      return index;
    }
    const int left_cover = std::uniform_int_distribution<int>(1, cover - 1)(rng_);
    const auto column = static_cast<std::int32_t>(
        std::uniform_int_distribution<std::size_t>(0, width_ - 1)(rng_));
    const double threshold = unit(rng_);
    const auto left = grow(depth + 1, max_depth, left_cover);
    const auto right = grow(depth + 1, max_depth, cover - left_cover);
    nodes_[index].column = column;
    nodes_[index].threshold = threshold;
    nodes_[index].left = static_cast<std::int32_t>(left);
    nodes_[index].right = static_cast<std::int32_t>(right);
    for (std::size_t k = 0; k < outputs_; ++k) {
      values_[index * outputs_ + k] =
          (values_[left * outputs_ + k] * left_cover +
           values_[right * outputs_ + k] * (cover - left_cover)) / cover;
    }
    return index;
  }

  std::mt19937_64 rng_;
  std::size_t width_;
  std::size_t outputs_;
  std::vector<TreeNode> nodes_;
  std::vector<double> values_;
};

// Schema whose encoded width is exactly `width` (>= 4): a 3-level categorical,
// one binary, and numerical columns in [0, 1] for the rest.
inline SchemaPtr width_schema(std::size_t width) {
  std::vector<FeatureSpec> f;
  f.push_back(categorical("group", {"a", "b", "c"}));
  f.push_back(binary("flag", FeatureTag::kComorbidity));
  for (std::size_t i = 4; i < width; ++i) f.push_back(numerical("x" + std::to_string(i), 0.0, 1.0));
  return std::make_shared<const CohortSchema>(std::move(f), std::vector<std::string>{"y1", "y2"});
}

inline PatientRecord random_record(const CohortSchema& schema, std::mt19937_64& rng) {
  PatientRecord r;
  r.id = "r";
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (const auto& f : schema.features()) {
    switch (f.kind) {
      case FeatureKind::kNumerical:
        r.values.push_back(f.min + (f.max - f.min) * unit(rng));
        break;
      case FeatureKind::kBinary:
        r.values.push_back(unit(rng) < 0.5 ? 0.0 : 1.0);
        break;
      case FeatureKind::kCategorical:
        r.values.push_back(static_cast<double>(
            std::uniform_int_distribution<std::size_t>(0, f.levels.size() - 1)(rng)));
        break;
    }
  }
  return r;
}

inline RandomForest random_forest(SchemaPtr schema, std::uint64_t seed, int n_trees, int depth) {
  const FeatureEncoder enc(*schema);
  RandomTreeMaker maker(seed, enc.width(), schema->outcomes().size());
  std::vector<DecisionTree> trees;
  for (int t = 0; t < n_trees; ++t) trees.push_back(maker.make(depth));
  auto fill = midpoint_fill(*schema);
  return RandomForest(schema, std::move(trees), fill);
}

}  // namespace riskexplain::fixtures
