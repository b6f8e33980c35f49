#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace riskexplain {

enum class FeatureKind { kBinary, kCategorical, kNumerical };

enum class FeatureTag { kLab, kComorbidity, kDemographic, kAdmission, kSurgery };

std::string_view to_string(FeatureKind kind);
std::string_view to_string(FeatureTag tag);

struct NormalRange {
  double low = 0.0;
  double high = 0.0;
  bool operator==(const NormalRange&) const = default;
};

/// One column of the cohort. Binary values are stored as 0/1, categorical
/// values as the index of the level, numerical values as-is.
struct FeatureSpec {
  std::string name;
  std::string display_name;
  FeatureKind kind = FeatureKind::kBinary;
  std::vector<std::string> levels;                     // categorical only
  std::vector<std::string> labels = {"0", "1"};        // binary display labels
  double min = 0.0;                                    // numerical only
  double max = 1.0;
  std::string unit;
  bool is_mutable = false;
  std::set<FeatureTag> tags;
  std::optional<NormalRange> normal_range;
  int precision = 2;  // decimal places used when presenting values

  bool has_tag(FeatureTag tag) const { return tags.contains(tag); }
  bool is_lab() const { return has_tag(FeatureTag::kLab); }
  std::optional<std::size_t> level_index(std::string_view level) const;

  bool operator==(const FeatureSpec&) const = default;
};

// Throws Error(kValidation) naming the feature on any invariant violation.
void validate_feature(const FeatureSpec& spec);

class CohortSchema {
 public:
  CohortSchema(std::vector<FeatureSpec> features, std::vector<std::string> outcomes);

  const std::vector<FeatureSpec>& features() const { return features_; }
  const FeatureSpec& feature(std::size_t i) const { return features_.at(i); }
  const std::vector<std::string>& outcomes() const { return outcomes_; }
  std::size_t size() const { return features_.size(); }

  std::optional<std::size_t> find_feature(std::string_view name) const;
  std::size_t feature_index(std::string_view name) const;  // throws kUnknownFeature
  std::optional<std::size_t> find_outcome(std::string_view name) const;
  std::size_t outcome_index(std::string_view name) const;  // throws kUnknownOutcome

  bool operator==(const CohortSchema& other) const {
    return features_ == other.features_ && outcomes_ == other.outcomes_;
  }

 private:
  std::vector<FeatureSpec> features_;
  std::vector<std::string> outcomes_;
  std::unordered_map<std::string, std::size_t> by_name_;
};

using SchemaPtr = std::shared_ptr<const CohortSchema>;

inline constexpr int kSchemaVersion = 1;

CohortSchema schema_from_json(const nlohmann::json& doc);
nlohmann::json schema_to_json(const CohortSchema& schema);
CohortSchema load_schema(const std::filesystem::path& path);

std::filesystem::path default_schema_path();

}  // namespace riskexplain
