#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "riskexplain/schema.hpp"

namespace riskexplain {

// std::nullopt is the missing marker; only lab-tagged features may be missing.
using Value = std::optional<double>;

struct PatientRecord {
  std::string id;
  std::vector<Value> values;

  bool operator==(const PatientRecord&) const = default;
};

// Throws Error(kValidation) with the feature name as field.
void validate_record(const CohortSchema& schema, const PatientRecord& record);

// Parses one cell into a value for `spec`. Empty text is the missing marker.
Value parse_value(const FeatureSpec& spec, std::string_view text);
// Inverse of parse_value; numerical values use the shortest round-trip form.
std::string format_value(const FeatureSpec& spec, const Value& value);
// Human-facing form: level names, binary labels, numbers at display precision plus unit.
std::string display_value(const FeatureSpec& spec, const Value& value);

class Dataset {
 public:
  Dataset(SchemaPtr schema, std::vector<PatientRecord> records);
  // `labels` is row-major |records| x |outcomes|, each entry 0 or 1.
  Dataset(SchemaPtr schema, std::vector<PatientRecord> records, std::vector<std::uint8_t> labels);

  const CohortSchema& schema() const { return *schema_; }
  const SchemaPtr& schema_ptr() const { return schema_; }
  const std::vector<PatientRecord>& records() const { return records_; }
  const PatientRecord& record(std::size_t i) const { return records_.at(i); }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  bool has_labels() const { return has_labels_; }
  std::uint8_t label(std::size_t row, std::size_t outcome) const;
  std::vector<std::uint8_t> outcome_labels(std::size_t outcome) const;
  const std::vector<std::uint8_t>& labels() const { return labels_; }

  std::optional<std::size_t> find_record(std::string_view id) const;
  Dataset subset(std::span<const std::size_t> rows) const;

  bool operator==(const Dataset& other) const {
    return *schema_ == *other.schema_ && records_ == other.records_ &&
           has_labels_ == other.has_labels_ && labels_ == other.labels_;
  }

 private:
  SchemaPtr schema_;
  std::vector<PatientRecord> records_;
  std::vector<std::uint8_t> labels_;
  bool has_labels_ = false;
};

// Header: "id", one column per feature, then one per outcome when has_labels.
// Column order in the file is free; the id column is optional (row numbers are used).
Dataset read_csv(std::istream& in, SchemaPtr schema, bool has_labels);
Dataset load_csv(const std::filesystem::path& path, SchemaPtr schema, bool has_labels);
void write_csv(std::ostream& out, const Dataset& dataset);
void save_csv(const std::filesystem::path& path, const Dataset& dataset);

// Linear-interpolation quantile at rank 1 + q(n-1) over already-sorted values.
double quantile_sorted(std::span<const double> sorted, double q);

std::vector<double> observed_values(const Dataset& dataset, std::size_t feature);

std::pair<double, double> percentile_bounds(const Dataset& dataset, std::string_view feature,
                                            double low_q, double high_q);

}  // namespace riskexplain
