#include "riskexplain/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "riskexplain/error.hpp"
#include "riskexplain/metrics.hpp"
#include "riskexplain/shap.hpp"

namespace riskexplain {

void validate_criteria(const CohortSchema& schema, const SimilarityCriteria& criteria) {
  const auto age = schema.find_feature(criteria.age_feature);
  if (!age) {
    throw Error(ErrorCode::kUnknownFeature, "unknown age feature '" + criteria.age_feature + "'",
                "criteria.age_feature");
  }
  if (schema.feature(*age).kind != FeatureKind::kNumerical) {
    throw Error(ErrorCode::kValidation, "age feature must be numerical", "criteria.age_feature");
  }
  if (!(criteria.age_tolerance >= 0.0)) {
    throw Error(ErrorCode::kValidation, "age tolerance must be >= 0", "criteria.age_tolerance");
  }
  if (!(criteria.comorbidity_threshold >= 0.0 && criteria.comorbidity_threshold <= 1.0)) {
    throw Error(ErrorCode::kValidation, "comorbidity threshold must be in [0, 1]",
                "criteria.comorbidity_threshold");
  }
  for (const auto& name : criteria.exact_match) {
    if (!schema.find_feature(name)) {
      throw Error(ErrorCode::kUnknownFeature, "unknown exact-match feature '" + name + "'",
                  "criteria.exact_match");
    }
  }
}

double comorbidity_agreement(const CohortSchema& schema, const PatientRecord& a,
                             const PatientRecord& b) {
  std::size_t total = 0;
  std::size_t agree = 0;
  for (std::size_t f = 0; f < schema.size(); ++f) {
    const auto& spec = schema.feature(f);
    if (spec.kind != FeatureKind::kBinary || !spec.has_tag(FeatureTag::kComorbidity)) continue;
    ++total;
    if (a.values[f] == b.values[f]) ++agree;
  }
  return total == 0 ? 1.0 : static_cast<double>(agree) / static_cast<double>(total);
}

std::vector<std::size_t> find_similar(const Dataset& dataset, const PatientRecord& index,
                                      const SimilarityCriteria& criteria) {
  const auto& schema = dataset.schema();
  validate_criteria(schema, criteria);
  validate_record(schema, index);
  const std::size_t age = schema.feature_index(criteria.age_feature);
  std::vector<std::size_t> exact;
  for (const auto& name : criteria.exact_match) exact.push_back(schema.feature_index(name));

  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& r = dataset.record(i);
    if (r.id == index.id) continue;
    if (!r.values[age] || !index.values[age] ||
        std::abs(*r.values[age] - *index.values[age]) > criteria.age_tolerance) {
      continue;
    }
    if (!std::all_of(exact.begin(), exact.end(),
                     [&](std::size_t f) { return r.values[f] == index.values[f]; })) {
      continue;
    }
    if (comorbidity_agreement(schema, r, index) < criteria.comorbidity_threshold) continue;
    out.push_back(i);
  }
  return out;
}

CohortSummary cohort_summary(const RandomForest& model, const Dataset& dataset,
                             const PatientRecord& index, const SimilarityCriteria& criteria) {
  if (!(model.schema() == dataset.schema())) {
    throw Error(ErrorCode::kSchemaMismatch, "dataset schema differs from the model's");
  }
  CohortSummary s;
  s.criteria = criteria;
  s.outcomes = model.schema().outcomes();
  const auto rows = find_similar(dataset, index, criteria);
  s.index_risk = model.predict_proba(index).probabilities;
  s.matched = rows.size();
  if (rows.empty()) return s;

  const std::size_t m = model.n_outputs();
  std::vector<double> risk(m, 0.0);
  std::vector<double> prevalence(m, 0.0);
  for (const auto row : rows) {
    s.matched_ids.push_back(dataset.record(row).id);
    const auto p = model.predict_proba(dataset.record(row));
    for (std::size_t k = 0; k < m; ++k) risk[k] += p[k];
    if (dataset.has_labels()) {
      for (std::size_t k = 0; k < m; ++k) prevalence[k] += dataset.label(row, k);
    }
  }
  const auto n = static_cast<double>(rows.size());
  for (auto& v : risk) v /= n;
  for (auto& v : prevalence) v /= n;
  s.mean_predicted_risk = std::move(risk);
  if (dataset.has_labels()) s.observed_prevalence = std::move(prevalence);
  return s;
}

std::vector<GroupingRule> default_subgroups() {
  GroupingRule sex{"sex", "sex", GroupingRule::Op::kEquals, 0.0, "female", {"female", "male"}};
  GroupingRule race{"race",
                    "race",
                    GroupingRule::Op::kEquals,
                    0.0,
                    "African American",
                    {"African American", "non-African American"}};
  GroupingRule age{"age", "age", GroupingRule::Op::kLessEqual, 65.0, "", {"age <= 65", "age > 65"}};
  return {sex, race, age};
}

std::vector<int> assign_groups(const Dataset& dataset, const GroupingRule& rule) {
  const auto& schema = dataset.schema();
  const auto f = schema.find_feature(rule.feature);
  if (!f) {
    throw Error(ErrorCode::kUnknownFeature, "unknown grouping feature '" + rule.feature + "'",
                "grouping.feature");
  }
  const auto& spec = schema.feature(*f);
  std::vector<int> groups(dataset.size(), 1);
  if (rule.op == GroupingRule::Op::kLessEqual) {
    if (spec.kind != FeatureKind::kNumerical) {
      throw Error(ErrorCode::kValidation, "threshold grouping needs a numerical feature",
                  "grouping.feature");
    }
    // A missing lab falls in the second group.
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const auto& v = dataset.record(i).values[*f];
      groups[i] = v && *v <= rule.value ? 0 : 1;
    }
    return groups;
  }
  std::optional<double> target;
  if (spec.kind == FeatureKind::kCategorical) {
    if (const auto l = spec.level_index(rule.level)) target = static_cast<double>(*l);
  } else if (spec.kind == FeatureKind::kBinary) {
    for (std::size_t l = 0; l < spec.labels.size(); ++l) {
      if (spec.labels[l] == rule.level || std::to_string(l) == rule.level) {
        target = static_cast<double>(l);
      }
    }
  } else {
    target = rule.value;
  }
  if (!target) {
    throw Error(ErrorCode::kValidation, "unknown level '" + rule.level + "' for " + spec.name,
                "grouping.level");
  }
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    groups[i] = dataset.record(i).values[*f] == target ? 0 : 1;
  }
  return groups;
}

namespace {

std::vector<std::pair<std::string, double>> rank(const CohortSchema& schema,
                                                 const std::vector<double>& importance) {
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t f = 0; f < schema.size(); ++f) out.emplace_back(schema.feature(f).name, importance[f]);
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

void check_inputs(const RandomForest& model, const Dataset& dataset,
                  const ImportanceOptions& options) {
  if (!(model.schema() == dataset.schema())) {
    throw Error(ErrorCode::kSchemaMismatch, "dataset schema differs from the model's");
  }
  if (dataset.empty()) throw Error(ErrorCode::kPrecondition, "dataset is empty", "dataset");
  if (options.sample_size == 0) {
    throw Error(ErrorCode::kValidation, "sample_size must be positive", "sample_size");
  }
  if (options.outcome) model.schema().outcome_index(*options.outcome);
}

// Seeded sample of up to sample_size rows, in dataset order.
std::vector<std::size_t> sample_rows(const Dataset& dataset, const ImportanceOptions& options) {
  std::vector<std::size_t> rows(dataset.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  if (rows.size() > options.sample_size) {
    std::mt19937_64 rng(mix_seed(options.seed, 0));
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(options.sample_size);
    std::sort(rows.begin(), rows.end());
  }
  return rows;
}

// Scores per sampled record for one view: outcomes x features per record
// (mean |SHAP|) or recomputed per slice (permutation).
class ImportanceEngine {
 public:
  ImportanceEngine(const RandomForest& model, const Dataset& dataset,
                   const ImportanceOptions& options)
      : model_(model), dataset_(dataset), options_(options), rows_(sample_rows(dataset, options)) {
    if (options.method == ImportanceMethod::kMeanAbsShap) {
      std::vector<PatientRecord> records;
      records.reserve(rows_.size());
      for (const auto row : rows_) records.push_back(dataset.record(row));
      abs_phi_ = shap_batch(model, records, options.exec);
      for (auto& v : abs_phi_) {
        for (auto& x : v) x = std::abs(x);
      }
    }
  }

  const std::vector<std::size_t>& rows() const { return rows_; }

  // Positions into rows() whose record falls in group g.
  std::vector<std::size_t> members(const GroupingRule& rule, int g) const {
    const auto groups = assign_groups(dataset_, rule);
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      if (groups[rows_[i]] == g) out.push_back(i);
    }
    if (out.empty()) {
      throw Error(ErrorCode::kPrecondition,
                  "group '" + rule.group_names[static_cast<std::size_t>(g)] + "' is empty",
                  "grouping");
    }
    return out;
  }

  RankedImportance ranking(const std::string& name, const std::vector<std::size_t>& positions,
                           std::optional<std::size_t> outcome) const {
    const auto& schema = model_.schema();
    const std::size_t features = schema.size();
    std::vector<double> mean(features, 0.0);
    if (options_.method == ImportanceMethod::kPermutation) {
      std::vector<std::size_t> rows;
      for (const auto p : positions) rows.push_back(rows_[p]);
      ImportanceOptions opt = options_;
      opt.sample_size = rows.size();
      opt.outcome = outcome ? std::optional<std::string>(schema.outcomes()[*outcome]) : std::nullopt;
      const auto deltas = permutation_auroc_deltas(model_, dataset_.subset(rows), opt);
      for (std::size_t f = 0; f < features; ++f) {
        mean[f] = std::accumulate(deltas[f].begin(), deltas[f].end(), 0.0) /
                  static_cast<double>(deltas[f].size());
      }
    } else {
      const std::size_t m = model_.n_outputs();
      for (const auto p : positions) {
        const auto& phi = abs_phi_[p];
        if (outcome) {
          for (std::size_t f = 0; f < features; ++f) mean[f] += phi[*outcome * features + f];
        } else {
          for (std::size_t f = 0; f < features; ++f) {
            double s = 0.0;
            for (std::size_t k = 0; k < m; ++k) s += phi[k * features + f];
            mean[f] += s / static_cast<double>(m);
          }
        }
      }
      for (auto& v : mean) v /= static_cast<double>(positions.size());
    }
    return {name, positions.size(), rank(schema, mean)};
  }

  std::vector<std::size_t> all_positions() const {
    std::vector<std::size_t> out(rows_.size());
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
  }

  std::optional<std::size_t> selected_outcome() const {
    if (!options_.outcome) return std::nullopt;
    return model_.schema().outcome_index(*options_.outcome);
  }

 private:
  const RandomForest& model_;
  const Dataset& dataset_;
  const ImportanceOptions& options_;
  std::vector<std::size_t> rows_;
  std::vector<std::vector<double>> abs_phi_;
};

}  // namespace

std::vector<RankedImportance> global_importance(const RandomForest& model, const Dataset& dataset,
                                                const std::optional<GroupingRule>& grouping,
                                                const ImportanceOptions& options) {
  check_inputs(model, dataset, options);
  const ImportanceEngine engine(model, dataset, options);
  const auto outcome = engine.selected_outcome();
  std::vector<RankedImportance> out;
  out.push_back(engine.ranking("overall", engine.all_positions(), outcome));
  if (grouping) {
    for (int g = 0; g < 2; ++g) {
      out.push_back(engine.ranking(grouping->group_names[static_cast<std::size_t>(g)],
                                   engine.members(*grouping, g), outcome));
    }
  }
  return out;
}

std::vector<RankedImportance> outcome_importance(const RandomForest& model, const Dataset& dataset,
                                                 const ImportanceOptions& options) {
  check_inputs(model, dataset, options);
  const ImportanceEngine engine(model, dataset, options);
  std::vector<RankedImportance> out;
  for (std::size_t k = 0; k < model.n_outputs(); ++k) {
    out.push_back(engine.ranking(model.schema().outcomes()[k], engine.all_positions(), k));
  }
  return out;
}

ImportanceReport importance_report(const RandomForest& model, const Dataset& dataset,
                                   const std::vector<GroupingRule>& groupings, bool per_outcome,
                                   const ImportanceOptions& options) {
  check_inputs(model, dataset, options);
  const ImportanceEngine engine(model, dataset, options);
  const auto outcome = engine.selected_outcome();
  ImportanceReport report;
  report.overall = engine.ranking("overall", engine.all_positions(), outcome);
  if (per_outcome) {
    for (std::size_t k = 0; k < model.n_outputs(); ++k) {
      report.per_outcome.push_back(
          engine.ranking(model.schema().outcomes()[k], engine.all_positions(), k));
    }
  }
  for (const auto& rule : groupings) {
    report.subgroups.push_back(
        {rule.name,
         {engine.ranking(rule.group_names[0], engine.members(rule, 0), outcome),
          engine.ranking(rule.group_names[1], engine.members(rule, 1), outcome)}});
  }
  return report;
}

std::vector<std::vector<double>> permutation_auroc_deltas(const RandomForest& model,
                                                          const Dataset& dataset,
                                                          const ImportanceOptions& options) {
  check_inputs(model, dataset, options);
  if (!dataset.has_labels()) {
    throw Error(ErrorCode::kPrecondition, "permutation importance needs labels", "dataset");
  }
  if (options.permutation_repeats == 0) {
    throw Error(ErrorCode::kValidation, "permutation_repeats must be positive",
                "permutation_repeats");
  }
  const auto& schema = model.schema();
  const std::size_t m = model.n_outputs();
  std::vector<std::size_t> outcomes;
  if (options.outcome) {
    outcomes.push_back(schema.outcome_index(*options.outcome));
  } else {
    for (std::size_t k = 0; k < m; ++k) outcomes.push_back(k);
  }

  std::vector<std::vector<std::uint8_t>> labels;
  for (const auto k : outcomes) labels.push_back(dataset.outcome_labels(k));

  auto mean_auroc = [&](const std::vector<RiskPrediction>& preds) {
    double total = 0.0;
    std::size_t defined = 0;
    std::vector<double> scores(preds.size());
    for (std::size_t j = 0; j < outcomes.size(); ++j) {
      for (std::size_t i = 0; i < preds.size(); ++i) scores[i] = preds[i][outcomes[j]];
      if (const auto a = auroc(scores, labels[j])) {
        total += *a;
        ++defined;
      }
    }
    if (defined == 0) {
      throw Error(ErrorCode::kDegenerateLabels, "no outcome has both classes in the sample",
                  "dataset");
    }
    return total / static_cast<double>(defined);
  };

  const double baseline = mean_auroc(model.predict_batch(dataset.records(), options.exec));
  const std::size_t repeats = options.permutation_repeats;
  std::vector<std::vector<double>> deltas(schema.size(), std::vector<double>(repeats, 0.0));
  for (std::size_t f = 0; f < schema.size(); ++f) {
    for (std::size_t r = 0; r < repeats; ++r) {
      std::vector<Value> column;
      for (const auto& rec : dataset.records()) column.push_back(rec.values[f]);
      std::mt19937_64 rng(mix_seed(options.seed, f * repeats + r + 1));
      std::shuffle(column.begin(), column.end(), rng);
      auto shuffled = dataset.records();
      for (std::size_t i = 0; i < shuffled.size(); ++i) shuffled[i].values[f] = column[i];
      deltas[f][r] = baseline - mean_auroc(model.predict_batch(shuffled, options.exec));
    }
  }
  return deltas;
}

double spearman_correlation(const RankedImportance& a, const RankedImportance& b) {
  if (a.ranking.size() != b.ranking.size() || a.ranking.size() < 2) {
    throw Error(ErrorCode::kValidation, "rankings must cover the same features");
  }
  // Average ranks, ties sharing the mean position.
  auto ranks = [](const RankedImportance& r) {
    std::map<std::string, double> out;
    const auto& v = r.ranking;
    for (std::size_t i = 0; i < v.size();) {
      std::size_t j = i;
      while (j < v.size() && v[j].second == v[i].second) ++j;
      const double mean_rank = (static_cast<double>(i) + static_cast<double>(j - 1)) / 2.0;
      for (std::size_t t = i; t < j; ++t) out[v[t].first] = mean_rank;
      i = j;
    }
    return out;
  };
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  std::vector<double> x;
  std::vector<double> y;
  for (const auto& [name, r] : ra) {
    const auto it = rb.find(name);
    if (it == rb.end()) throw Error(ErrorCode::kValidation, "rankings must cover the same features");
    x.push_back(r);
    y.push_back(it->second);
  }
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace riskexplain
