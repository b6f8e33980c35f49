#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "riskexplain/dataset.hpp"

namespace riskexplain {

struct EncodedColumn {
  std::size_t feature = 0;
  int level = -1;  // one-hot level for categoricals, -1 otherwise
  std::string name;
};

// Maps schema features onto the numeric matrix the trees split on.
// Categoricals become one-hot groups; everything else is one column.
class FeatureEncoder {
 public:
  explicit FeatureEncoder(const CohortSchema& schema);

  std::size_t width() const { return columns_.size(); }
  const std::vector<EncodedColumn>& columns() const { return columns_; }
  std::size_t feature_of(std::size_t column) const { return columns_[column].feature; }
  // [first, last) encoded columns of a schema feature
  std::pair<std::size_t, std::size_t> columns_of(std::size_t feature) const {
    return {offsets_[feature], offsets_[feature + 1]};
  }
  std::size_t feature_count() const { return offsets_.size() - 1; }

  // `fill` supplies the value for missing entries, indexed by feature.
  void encode(const PatientRecord& record, std::span<const double> fill,
              std::span<double> out) const;

  // Sums encoded-column values back to one value per schema feature.
  std::vector<double> aggregate(std::span<const double> per_column) const;

 private:
  const CohortSchema* schema_;
  std::vector<EncodedColumn> columns_;
  std::vector<std::size_t> offsets_;
};

}  // namespace riskexplain
