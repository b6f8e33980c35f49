#include "riskexplain/encoder.hpp"

#include "riskexplain/error.hpp"

namespace riskexplain {

FeatureEncoder::FeatureEncoder(const CohortSchema& schema) : schema_(&schema) {
  offsets_.reserve(schema.size() + 1);
  for (std::size_t f = 0; f < schema.size(); ++f) {
    const auto& spec = schema.feature(f);
    offsets_.push_back(columns_.size());
    if (spec.kind == FeatureKind::kCategorical) {
      for (std::size_t l = 0; l < spec.levels.size(); ++l) {
        columns_.push_back({f, static_cast<int>(l), spec.name + "=" + spec.levels[l]});
      }
    } else {
      columns_.push_back({f, -1, spec.name});
    }
  }
  offsets_.push_back(columns_.size());
}

void FeatureEncoder::encode(const PatientRecord& record, std::span<const double> fill,
                            std::span<double> out) const {
  for (std::size_t f = 0; f + 1 < offsets_.size(); ++f) {
    const auto& spec = schema_->feature(f);
    const double v = record.values[f].value_or(fill[f]);
    if (spec.kind == FeatureKind::kCategorical) {
      const auto level = static_cast<std::size_t>(v);
      for (std::size_t c = offsets_[f]; c < offsets_[f + 1]; ++c) {
        out[c] = (c - offsets_[f]) == level ? 1.0 : 0.0;
      }
    } else {
      out[offsets_[f]] = v;
    }
  }
}

std::vector<double> FeatureEncoder::aggregate(std::span<const double> per_column) const {
  std::vector<double> out(feature_count(), 0.0);
  for (std::size_t c = 0; c < columns_.size(); ++c) out[columns_[c].feature] += per_column[c];
  return out;
}

}  // namespace riskexplain
