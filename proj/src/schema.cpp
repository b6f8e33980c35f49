#include "riskexplain/schema.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include "riskexplain/error.hpp"

namespace riskexplain {

using nlohmann::json;

std::string_view to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::kBinary: return "binary";
    case FeatureKind::kCategorical: return "categorical";
    case FeatureKind::kNumerical: return "numerical";
  }
  return "binary";
}

std::string_view to_string(FeatureTag tag) {
  switch (tag) {
    case FeatureTag::kLab: return "lab";
    case FeatureTag::kComorbidity: return "comorbidity";
    case FeatureTag::kDemographic: return "demographic";
    case FeatureTag::kAdmission: return "admission";
    case FeatureTag::kSurgery: return "surgery";
  }
  return "lab";
}

namespace {

FeatureKind parse_kind(const std::string& text, const std::string& field) {
  if (text == "binary") return FeatureKind::kBinary;
  if (text == "categorical") return FeatureKind::kCategorical;
  if (text == "numerical") return FeatureKind::kNumerical;
  throw Error(ErrorCode::kParse, "unknown feature kind '" + text + "'", field);
}

FeatureTag parse_tag(const std::string& text, const std::string& field) {
  for (auto tag : {FeatureTag::kLab, FeatureTag::kComorbidity, FeatureTag::kDemographic,
                   FeatureTag::kAdmission, FeatureTag::kSurgery}) {
    if (to_string(tag) == text) return tag;
  }
  throw Error(ErrorCode::kParse, "unknown feature tag '" + text + "'", field);
}

}  // namespace

std::optional<std::size_t> FeatureSpec::level_index(std::string_view level) const {
  auto it = std::find(levels.begin(), levels.end(), level);
  if (it == levels.end()) return std::nullopt;
  return static_cast<std::size_t>(it - levels.begin());
}

void validate_feature(const FeatureSpec& spec) {
  auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::kValidation, "feature '" + spec.name + "': " + what, spec.name);
  };
  if (spec.name.empty()) throw Error(ErrorCode::kValidation, "feature with empty name");
  switch (spec.kind) {
    case FeatureKind::kCategorical: {
      if (spec.levels.empty()) fail("categorical level list is empty");
      std::unordered_set<std::string> seen;
      for (const auto& level : spec.levels) {
        if (!seen.insert(level).second) fail("duplicate categorical level '" + level + "'");
      }
      break;
    }
    case FeatureKind::kNumerical:
      if (!std::isfinite(spec.min) || !std::isfinite(spec.max) || !(spec.min < spec.max)) {
        fail("numerical bounds require min < max");
      }
      break;
    case FeatureKind::kBinary:
      if (spec.labels.size() != 2 || spec.labels[0] == spec.labels[1]) {
        fail("binary labels must be two distinct strings");
      }
      break;
  }
  if (spec.normal_range) {
    if (spec.kind != FeatureKind::kNumerical) fail("normal_range requires a numerical feature");
    const auto& r = *spec.normal_range;
    if (!(r.low <= r.high) || r.low < spec.min || r.high > spec.max) {
      fail("normal_range must lie within [min, max]");
    }
  }
  if (spec.is_mutable && !spec.is_lab()) fail("only lab-tagged features may be mutable");
  if (spec.precision < 0 || spec.precision > 9) fail("precision must be in [0, 9]");
}

CohortSchema::CohortSchema(std::vector<FeatureSpec> features, std::vector<std::string> outcomes)
    : features_(std::move(features)), outcomes_(std::move(outcomes)) {
  for (std::size_t i = 0; i < features_.size(); ++i) {
    validate_feature(features_[i]);
    if (!by_name_.emplace(features_[i].name, i).second) {
      throw Error(ErrorCode::kValidation, "duplicate feature name '" + features_[i].name + "'",
                  features_[i].name);
    }
  }
  if (features_.empty()) throw Error(ErrorCode::kValidation, "schema declares no features");
  if (outcomes_.empty()) throw Error(ErrorCode::kValidation, "schema declares no outcomes", "outcomes");
  std::unordered_set<std::string> seen;
  for (const auto& outcome : outcomes_) {
    if (outcome.empty() || !seen.insert(outcome).second) {
      throw Error(ErrorCode::kValidation, "outcome names must be unique and non-empty", "outcomes");
    }
    if (by_name_.contains(outcome)) {
      throw Error(ErrorCode::kValidation, "outcome '" + outcome + "' collides with a feature name",
                  "outcomes");
    }
  }
}

std::optional<std::size_t> CohortSchema::find_feature(std::string_view name) const {
  auto it = by_name_.find(std::string(name));
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

std::size_t CohortSchema::feature_index(std::string_view name) const {
  if (auto i = find_feature(name)) return *i;
  throw Error(ErrorCode::kUnknownFeature, "unknown feature '" + std::string(name) + "'",
              std::string(name));
}

std::optional<std::size_t> CohortSchema::find_outcome(std::string_view name) const {
  auto it = std::find(outcomes_.begin(), outcomes_.end(), name);
  if (it == outcomes_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - outcomes_.begin());
}

std::size_t CohortSchema::outcome_index(std::string_view name) const {
  if (auto i = find_outcome(name)) return *i;
  throw Error(ErrorCode::kUnknownOutcome, "unknown outcome '" + std::string(name) + "'", "outcome");
}

CohortSchema schema_from_json(const json& doc) {
  try {
    if (!doc.is_object()) throw Error(ErrorCode::kParse, "schema document must be an object");
    const int version = doc.value("schema_version", 0);
    if (version != kSchemaVersion) {
      throw Error(ErrorCode::kVersion,
                  "unsupported schema_version " + std::to_string(version), "schema_version");
    }
    std::vector<FeatureSpec> features;
    for (const auto& f : doc.at("features")) {
      FeatureSpec spec;
      spec.name = f.at("name").get<std::string>();
      const std::string field = "features." + spec.name;
      spec.display_name = f.value("display_name", spec.name);
      spec.kind = parse_kind(f.at("kind").get<std::string>(), field + ".kind");
      if (spec.kind == FeatureKind::kCategorical) {
        spec.levels = f.at("levels").get<std::vector<std::string>>();
      }
      if (spec.kind == FeatureKind::kBinary && f.contains("labels")) {
        spec.labels = f.at("labels").get<std::vector<std::string>>();
      }
      if (spec.kind == FeatureKind::kNumerical) {
        spec.min = f.at("min").get<double>();
        spec.max = f.at("max").get<double>();
      }
      spec.unit = f.value("unit", "");
      spec.is_mutable = f.value("mutable", false);
      for (const auto& tag : f.value("tags", std::vector<std::string>{})) {
        spec.tags.insert(parse_tag(tag, field + ".tags"));
      }
      if (f.contains("normal_range") && !f.at("normal_range").is_null()) {
        const auto& r = f.at("normal_range");
        spec.normal_range = NormalRange{r.at(0).get<double>(), r.at(1).get<double>()};
      }
      spec.precision = f.value("precision", 2);
      features.push_back(std::move(spec));
    }
    auto outcomes = doc.at("outcomes").get<std::vector<std::string>>();
    return CohortSchema(std::move(features), std::move(outcomes));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("malformed schema document: ") + e.what());
  }
}

json schema_to_json(const CohortSchema& schema) {
  json features = json::array();
  for (const auto& spec : schema.features()) {
    json f = {{"name", spec.name},
              {"display_name", spec.display_name},
              {"kind", to_string(spec.kind)},
              {"mutable", spec.is_mutable},
              {"precision", spec.precision}};
    if (spec.kind == FeatureKind::kCategorical) f["levels"] = spec.levels;
    if (spec.kind == FeatureKind::kBinary) f["labels"] = spec.labels;
    if (spec.kind == FeatureKind::kNumerical) {
      f["min"] = spec.min;
      f["max"] = spec.max;
    }
    f["unit"] = spec.unit;
    json tags = json::array();
    for (auto tag : spec.tags) tags.push_back(to_string(tag));
    f["tags"] = tags;
    if (spec.normal_range) {
      f["normal_range"] = {spec.normal_range->low, spec.normal_range->high};
    } else {
      f["normal_range"] = nullptr;
    }
    features.push_back(std::move(f));
  }
  return {{"schema_version", kSchemaVersion},
          {"outcomes", schema.outcomes()},
          {"features", std::move(features)}};
}

CohortSchema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open schema file " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) {
    throw Error(ErrorCode::kParse, "schema file is not a valid JSON document: " + path.string());
  }
  return schema_from_json(doc);
}

std::filesystem::path default_schema_path() {
  return std::filesystem::path(RISKEXPLAIN_DATA_DIR) / "default_schema.json";
}

}  // namespace riskexplain
