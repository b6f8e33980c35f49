#include "riskexplain/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "riskexplain/error.hpp"

namespace riskexplain {

namespace {

std::string shortest(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string fixed(double v, int precision) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(precision);
  os << v;
  return os.str();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// RFC 4180 style: quoted fields may contain commas and doubled quotes.
std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  if (quoted) throw Error(ErrorCode::kParse, "unterminated quoted CSV field");
  cells.push_back(std::move(cell));
  return cells;
}

std::string quote_csv(const std::string& cell) {
  if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

Value parse_value(const FeatureSpec& spec, std::string_view raw) {
  const std::string_view text = trim(raw);
  if (text.empty()) {
    if (spec.is_lab() && spec.kind == FeatureKind::kNumerical) return std::nullopt;
    throw Error(ErrorCode::kValidation, "missing value for non-lab feature '" + spec.name + "'",
                spec.name);
  }
  switch (spec.kind) {
    case FeatureKind::kBinary:
      if (text == "0" || text == spec.labels[0]) return 0.0;
      if (text == "1" || text == spec.labels[1]) return 1.0;
      throw Error(ErrorCode::kValidation,
                  "invalid binary value '" + std::string(text) + "' for '" + spec.name + "'",
                  spec.name);
    case FeatureKind::kCategorical:
      if (auto idx = spec.level_index(text)) return static_cast<double>(*idx);
      throw Error(ErrorCode::kValidation,
                  "unknown level '" + std::string(text) + "' for '" + spec.name + "'", spec.name);
    case FeatureKind::kNumerical: {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v)) {
        throw Error(ErrorCode::kValidation,
                    "non-numeric value '" + std::string(text) + "' for '" + spec.name + "'",
                    spec.name);
      }
      if (v < spec.min || v > spec.max) {
        throw Error(ErrorCode::kValidation,
                    "value " + std::string(text) + " for '" + spec.name + "' outside [" +
                        shortest(spec.min) + ", " + shortest(spec.max) + "]",
                    spec.name);
      }
      return v;
    }
  }
  return std::nullopt;
}

std::string format_value(const FeatureSpec& spec, const Value& value) {
  if (!value) return {};
  switch (spec.kind) {
    case FeatureKind::kBinary: return *value != 0.0 ? "1" : "0";
    case FeatureKind::kCategorical: return spec.levels.at(static_cast<std::size_t>(*value));
    case FeatureKind::kNumerical: return shortest(*value);
  }
  return {};
}

std::string display_value(const FeatureSpec& spec, const Value& value) {
  if (!value) return "missing";
  switch (spec.kind) {
    case FeatureKind::kBinary: return spec.labels[*value != 0.0 ? 1 : 0];
    case FeatureKind::kCategorical: return spec.levels.at(static_cast<std::size_t>(*value));
    case FeatureKind::kNumerical: {
      std::string text = fixed(*value, spec.precision);
      if (!spec.unit.empty()) text += " " + spec.unit;
      return text;
    }
  }
  return {};
}

void validate_record(const CohortSchema& schema, const PatientRecord& record) {
  if (record.values.size() != schema.size()) {
    throw Error(ErrorCode::kSchemaMismatch,
                "record '" + record.id + "' has " + std::to_string(record.values.size()) +
                    " values, schema has " + std::to_string(schema.size()) + " features");
  }
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const auto& spec = schema.feature(i);
    const auto& value = record.values[i];
    auto fail = [&](const std::string& what) {
      throw Error(ErrorCode::kValidation,
                  "record '" + record.id + "', feature '" + spec.name + "': " + what, spec.name);
    };
    if (!value) {
      if (!(spec.is_lab() && spec.kind == FeatureKind::kNumerical)) fail("missing value");
      continue;
    }
    const double v = *value;
    if (!std::isfinite(v)) fail("non-finite value");
    switch (spec.kind) {
      case FeatureKind::kBinary:
        if (v != 0.0 && v != 1.0) fail("binary value must be 0 or 1");
        break;
      case FeatureKind::kCategorical:
        if (v < 0 || v != std::floor(v) || v >= static_cast<double>(spec.levels.size())) {
          fail("level index out of range");
        }
        break;
      case FeatureKind::kNumerical:
        if (v < spec.min || v > spec.max) fail("value outside [min, max]");
        break;
    }
  }
}

Dataset::Dataset(SchemaPtr schema, std::vector<PatientRecord> records)
    : schema_(std::move(schema)), records_(std::move(records)) {
  for (const auto& r : records_) validate_record(*schema_, r);
}

Dataset::Dataset(SchemaPtr schema, std::vector<PatientRecord> records,
                 std::vector<std::uint8_t> labels)
    : Dataset(std::move(schema), std::move(records)) {
  if (labels.size() != records_.size() * schema_->outcomes().size()) {
    throw Error(ErrorCode::kValidation, "label matrix must be |records| x |outcomes|", "labels");
  }
  for (auto l : labels) {
    if (l > 1) throw Error(ErrorCode::kValidation, "labels must be 0 or 1", "labels");
  }
  labels_ = std::move(labels);
  has_labels_ = true;
}

std::uint8_t Dataset::label(std::size_t row, std::size_t outcome) const {
  if (!has_labels_) throw Error(ErrorCode::kPrecondition, "dataset is unlabeled");
  return labels_[row * schema_->outcomes().size() + outcome];
}

std::vector<std::uint8_t> Dataset::outcome_labels(std::size_t outcome) const {
  std::vector<std::uint8_t> out(records_.size());
  for (std::size_t r = 0; r < records_.size(); ++r) out[r] = label(r, outcome);
  return out;
}

std::optional<std::size_t> Dataset::find_record(std::string_view id) const {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (records_[i].id == id) return i;
  }
  return std::nullopt;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  std::vector<PatientRecord> records;
  std::vector<std::uint8_t> labels;
  const std::size_t m = schema_->outcomes().size();
  records.reserve(rows.size());
  for (auto r : rows) {
    records.push_back(records_.at(r));
    if (has_labels_) {
      labels.insert(labels.end(), labels_.begin() + static_cast<std::ptrdiff_t>(r * m),
                    labels_.begin() + static_cast<std::ptrdiff_t>((r + 1) * m));
    }
  }
  if (has_labels_) return Dataset(schema_, std::move(records), std::move(labels));
  return Dataset(schema_, std::move(records));
}

Dataset read_csv(std::istream& in, SchemaPtr schema, bool has_labels) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kParse, "CSV input is empty");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_csv_line(line);

  const std::size_t n_features = schema->size();
  const std::size_t n_outcomes = schema->outcomes().size();
  std::vector<int> feature_col(n_features, -1);
  std::vector<int> outcome_col(n_outcomes, -1);
  int id_col = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string name(trim(header[c]));
    if (name == "id") {
      id_col = static_cast<int>(c);
    } else if (auto f = schema->find_feature(name)) {
      feature_col[*f] = static_cast<int>(c);
    } else if (auto o = schema->find_outcome(name); o && has_labels) {
      outcome_col[*o] = static_cast<int>(c);
    } else {
      throw Error(ErrorCode::kValidation, "unknown column '" + name + "'", name);
    }
  }
  for (std::size_t f = 0; f < n_features; ++f) {
    if (feature_col[f] < 0) {
      throw Error(ErrorCode::kValidation, "missing column for feature '" + schema->feature(f).name + "'",
                  schema->feature(f).name);
    }
  }
  if (has_labels) {
    for (std::size_t o = 0; o < n_outcomes; ++o) {
      if (outcome_col[o] < 0) {
        throw Error(ErrorCode::kValidation, "missing column for outcome '" + schema->outcomes()[o] + "'",
                    schema->outcomes()[o]);
      }
    }
  }

  std::vector<PatientRecord> records;
  std::vector<std::uint8_t> labels;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto cells = split_csv_line(line);
    const std::string where = "row " + std::to_string(row);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::kParse, where + ": expected " + std::to_string(header.size()) +
                                         " cells, found " + std::to_string(cells.size()));
    }
    PatientRecord record;
    record.id = id_col >= 0 ? std::string(trim(cells[id_col])) : std::to_string(row);
    record.values.reserve(n_features);
    for (std::size_t f = 0; f < n_features; ++f) {
      const auto& spec = schema->feature(f);
      const auto& cell = cells[feature_col[f]];
      try {
        record.values.push_back(parse_value(spec, cell));
      } catch (const Error& e) {
        throw Error(e.code(),
                    where + ", column '" + spec.name + "', value '" + cell + "': " + e.what(),
                    spec.name);
      }
    }
    for (std::size_t o = 0; o < n_outcomes && has_labels; ++o) {
      const std::string_view cell = trim(cells[outcome_col[o]]);
      if (cell != "0" && cell != "1") {
        throw Error(ErrorCode::kValidation,
                    where + ", column '" + schema->outcomes()[o] + "', value '" +
                        std::string(cell) + "': label must be 0 or 1",
                    schema->outcomes()[o]);
      }
      labels.push_back(cell == "1" ? 1 : 0);
    }
    records.push_back(std::move(record));
  }
  if (has_labels) return Dataset(std::move(schema), std::move(records), std::move(labels));
  return Dataset(std::move(schema), std::move(records));
}

Dataset load_csv(const std::filesystem::path& path, SchemaPtr schema, bool has_labels) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open CSV file " + path.string());
  return read_csv(in, std::move(schema), has_labels);
}

void write_csv(std::ostream& out, const Dataset& dataset) {
  const auto& schema = dataset.schema();
  out << "id";
  for (const auto& spec : schema.features()) out << ',' << quote_csv(spec.name);
  if (dataset.has_labels()) {
    for (const auto& o : schema.outcomes()) out << ',' << quote_csv(o);
  }
  out << '\n';
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    const auto& record = dataset.record(r);
    out << quote_csv(record.id);
    for (std::size_t f = 0; f < schema.size(); ++f) {
      out << ',' << quote_csv(format_value(schema.feature(f), record.values[f]));
    }
    if (dataset.has_labels()) {
      for (std::size_t o = 0; o < schema.outcomes().size(); ++o) {
        out << ',' << static_cast<int>(dataset.label(r, o));
      }
    }
    out << '\n';
  }
}

void save_csv(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write CSV file " + path.string());
  write_csv(out, dataset);
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error(ErrorCode::kPrecondition, "quantile of an empty sample");
  const double rank = q * static_cast<double>(sorted.size() - 1);  // zero-based 1 + q(n-1)
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::vector<double> observed_values(const Dataset& dataset, std::size_t feature) {
  std::vector<double> values;
  values.reserve(dataset.size());
  for (const auto& r : dataset.records()) {
    if (r.values[feature]) values.push_back(*r.values[feature]);
  }
  return values;
}

std::pair<double, double> percentile_bounds(const Dataset& dataset, std::string_view feature,
                                            double low_q, double high_q) {
  const std::size_t f = dataset.schema().feature_index(feature);
  const auto& spec = dataset.schema().feature(f);
  if (spec.kind != FeatureKind::kNumerical) {
    throw Error(ErrorCode::kPrecondition, "percentile bounds need a numerical feature", spec.name);
  }
  if (!(0.0 <= low_q && low_q < high_q && high_q <= 1.0)) {
    throw Error(ErrorCode::kPrecondition, "quantiles must satisfy 0 <= low < high <= 1", spec.name);
  }
  auto values = observed_values(dataset, f);
  if (values.empty()) {
    throw Error(ErrorCode::kPrecondition, "all values of '" + spec.name + "' are missing", spec.name);
  }
  std::sort(values.begin(), values.end());
  return {quantile_sorted(values, low_q), quantile_sorted(values, high_q)};
}

}  // namespace riskexplain
