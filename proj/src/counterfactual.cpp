#include "riskexplain/counterfactual.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>

#include "riskexplain/error.hpp"

namespace riskexplain {

std::string_view to_string(Direction direction) {
  return direction == Direction::kDecrease ? "decrease" : "increase";
}

namespace {

constexpr double kChangedTolerance = 1e-6;  // in scale units

double median_absolute_deviation(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double median = quantile_sorted(values, 0.5);
  for (auto& v : values) v = std::abs(v - median);
  std::sort(values.begin(), values.end());
  return quantile_sorted(values, 0.5);
}

MutableFeature boxed_feature(const Dataset& training, std::size_t f, double low_q, double high_q) {
  const auto& spec = training.schema().feature(f);
  if (spec.kind != FeatureKind::kNumerical || !spec.is_lab()) {
    throw Error(ErrorCode::kValidation, "counterfactual features must be numerical labs", spec.name);
  }
  auto [low, high] = percentile_bounds(training, spec.name, low_q, high_q);
  low = std::clamp(low, spec.min, spec.max);
  high = std::clamp(high, spec.min, spec.max);
  const auto values = observed_values(training, f);
  double scale = median_absolute_deviation(values);
  if (!(scale > 0.0)) scale = (high - low) / 4.0;
  if (!(scale > 0.0)) scale = 1.0;
  return {f, low, high, scale};
}

void check_quantiles(double low_q, double high_q) {
  if (!(low_q >= 0.0 && low_q < high_q && high_q <= 1.0)) {
    throw Error(ErrorCode::kValidation, "percentile bounds must satisfy 0 <= low < high <= 1",
                "bounds");
  }
}

}  // namespace

CfConstraints make_constraints(const Dataset& training, Direction direction, double threshold,
                               double low_q, double high_q) {
  check_quantiles(low_q, high_q);
  CfConstraints c;
  c.threshold = threshold;
  c.direction = direction;
  for (std::size_t f = 0; f < training.schema().size(); ++f) {
    if (training.schema().feature(f).is_mutable) {
      c.features.push_back(boxed_feature(training, f, low_q, high_q));
    }
  }
  if (c.features.empty()) {
    throw Error(ErrorCode::kValidation, "schema declares no mutable lab features", "mutable");
  }
  return c;
}

CfConstraints make_constraints(const Dataset& training, const std::vector<std::string>& features,
                               Direction direction, double threshold, double low_q,
                               double high_q) {
  check_quantiles(low_q, high_q);
  if (features.empty()) {
    throw Error(ErrorCode::kValidation, "mutable feature set is empty", "mutable");
  }
  CfConstraints c;
  c.threshold = threshold;
  c.direction = direction;
  for (const auto& name : features) {
    const std::size_t f = training.schema().feature_index(name);
    for (const auto& existing : c.features) {
      if (existing.feature == f) {
        throw Error(ErrorCode::kValidation, "duplicate mutable feature", name);
      }
    }
    c.features.push_back(boxed_feature(training, f, low_q, high_q));
  }
  return c;
}

namespace {

struct Candidate {
  std::vector<double> genes;
  double risk = 0.0;
  bool valid = false;
  double hinge = 0.0;  // distance short of the target side, 0 when valid
  double l1 = 0.0;
  std::size_t changed = 0;
  double cost = 0.0;
};

class Search {
 public:
  Search(const RandomForest& model, const PatientRecord& record, std::size_t outcome,
         const CfConstraints& constraints, const CfSearchOptions& options)
      : model_(model),
        record_(record),
        outcome_(outcome),
        c_(constraints),
        opt_(options),
        rng_(mix_seed(options.seed, 0)) {
    for (const auto& mf : c_.features) {
      original_.push_back(record.values[mf.feature].value_or(model.imputation()[mf.feature]));
    }
  }

  std::size_t evaluations() const { return evaluations_; }
  const std::vector<double>& original() const { return original_; }

  bool is_changed(std::size_t j, double g) const {
    return std::abs(g - original_[j]) / c_.features[j].scale > kChangedTolerance;
  }

  PatientRecord materialize(const std::vector<double>& genes) const {
    PatientRecord r = record_;
    for (std::size_t j = 0; j < genes.size(); ++j) {
      if (is_changed(j, genes[j])) r.values[c_.features[j].feature] = genes[j];
    }
    return r;
  }

  void score(Candidate& cand) const {
    const auto x = model_.encode(materialize(cand.genes));
    cand.risk = model_.predict_encoded(x, outcome_);
    const double t = c_.threshold;
    if (c_.direction == Direction::kDecrease) {
      cand.valid = cand.risk < t;
      cand.hinge = cand.valid ? 0.0 : cand.risk - t;
    } else {
      cand.valid = cand.risk >= t;
      cand.hinge = cand.valid ? 0.0 : t - cand.risk;
    }
    cand.l1 = 0.0;
    cand.changed = 0;
    for (std::size_t j = 0; j < cand.genes.size(); ++j) {
      if (!is_changed(j, cand.genes[j])) continue;
      cand.l1 += std::abs(cand.genes[j] - original_[j]) / c_.features[j].scale;
      ++cand.changed;
    }
    cand.cost = opt_.proximity_weight * cand.l1 +
                opt_.sparsity_weight * static_cast<double>(cand.changed);
  }

  // Feasibility first: any valid candidate beats any invalid one.
  static bool better(const Candidate& a, const Candidate& b) {
    if (a.valid != b.valid) return a.valid;
    if (!a.valid) return a.hinge < b.hinge || (a.hinge == b.hinge && a.cost < b.cost);
    return a.cost < b.cost;
  }

  void score_all(std::vector<Candidate>& batch) {
    for_each_index(opt_.exec, batch.size(), [&](std::size_t i) { score(batch[i]); });
    evaluations_ += batch.size();
  }

  std::vector<Candidate> run() {
    const std::size_t m = c_.features.size();
    const std::size_t pop_size = std::max<std::size_t>(opt_.population, 4);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<Candidate> population(pop_size);
    for (auto& cand : population) {
      cand.genes = original_;
      bool any = false;
      for (std::size_t j = 0; j < m; ++j) {
        if (unit(rng_) < 0.5) {
          cand.genes[j] = uniform_in_box(j);
          any = true;
        }
      }
      if (!any) {
        const std::size_t j = std::uniform_int_distribution<std::size_t>(0, m - 1)(rng_);
        cand.genes[j] = uniform_in_box(j);
      }
    }
    score_all(population);
    archive(population);

    Candidate best = *std::min_element(population.begin(), population.end(), better);
    std::size_t stall = 0;
    while (evaluations_ < opt_.budget && stall < opt_.stall_generations) {
      const std::size_t n_children = std::min(pop_size, opt_.budget - evaluations_);
      std::vector<Candidate> children(n_children);
      for (auto& child : children) {
        const Candidate& a = tournament(population);
        const Candidate& b = tournament(population);
        child.genes.resize(m);
        for (std::size_t j = 0; j < m; ++j) child.genes[j] = unit(rng_) < 0.5 ? a.genes[j] : b.genes[j];
        mutate(child.genes);
      }
      score_all(children);
      archive(children);

      population.insert(population.end(), std::make_move_iterator(children.begin()),
                        std::make_move_iterator(children.end()));
      std::stable_sort(population.begin(), population.end(), better);
      population.resize(pop_size);

      if (better(population.front(), best)) {
        best = population.front();
        stall = 0;
      } else {
        ++stall;
      }
    }
    return select_elites();
  }

 private:
  double uniform_in_box(std::size_t j) {
    const auto& mf = c_.features[j];
    return std::uniform_real_distribution<double>(mf.low, mf.high)(rng_);
  }

  const Candidate& tournament(const std::vector<Candidate>& population) {
    std::uniform_int_distribution<std::size_t> pick(0, population.size() - 1);
    const Candidate& a = population[pick(rng_)];
    const Candidate& b = population[pick(rng_)];
    return better(b, a) ? b : a;
  }

  void mutate(std::vector<double>& genes) {
    const std::size_t m = genes.size();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double rate = 1.0 / static_cast<double>(m);
    for (std::size_t j = 0; j < m; ++j) {
      const double u = unit(rng_);
      if (u < 0.5 * rate) {
        genes[j] = original_[j];
      } else if (u < 1.5 * rate) {
        const auto& mf = c_.features[j];
        const double centre = std::clamp(genes[j], mf.low, mf.high);
        std::normal_distribution<double> step(0.0, opt_.mutation_scale * (mf.high - mf.low));
        double v = centre;
        for (int tries = 0; tries < 16; ++tries) {
          v = centre + step(rng_);
          if (v >= mf.low && v <= mf.high) break;
        }
        genes[j] = std::clamp(v, mf.low, mf.high);
      }
    }
  }

  void archive(const std::vector<Candidate>& batch) {
    for (const auto& cand : batch) {
      if (cand.valid && cand.changed > 0) valid_.push_back(cand);
    }
    if (valid_.size() > 4096) prune_archive();
  }

  void prune_archive() {
    std::stable_sort(valid_.begin(), valid_.end(), better);
    valid_.erase(std::unique(valid_.begin(), valid_.end(),
                             [](const Candidate& a, const Candidate& b) { return a.genes == b.genes; }),
                 valid_.end());
    if (valid_.size() > 512) valid_.resize(512);
  }

  double distance(const Candidate& a, const Candidate& b) const {
    double d = 0.0;
    for (std::size_t j = 0; j < a.genes.size(); ++j) {
      d += std::abs(a.genes[j] - b.genes[j]) / c_.features[j].scale;
    }
    return d;
  }

  // Greedy pick: cheapest first, then trade cost against distance to the
  // already chosen elites.
  std::vector<Candidate> select_elites() {
    prune_archive();
    std::vector<Candidate> chosen;
    std::vector<bool> used(valid_.size(), false);
    const std::size_t want = std::min(valid_.size(), 4 * std::max<std::size_t>(opt_.k, 1));
    while (chosen.size() < want) {
      double best_score = std::numeric_limits<double>::infinity();
      std::size_t best_i = valid_.size();
      for (std::size_t i = 0; i < valid_.size(); ++i) {
        if (used[i]) continue;
        double nearest = 0.0;
        if (!chosen.empty()) {
          nearest = std::numeric_limits<double>::infinity();
          for (const auto& e : chosen) nearest = std::min(nearest, distance(valid_[i], e));
        }
        const double s = valid_[i].cost - opt_.diversity_weight * nearest;
        if (s < best_score) {
          best_score = s;
          best_i = i;
        }
      }
      used[best_i] = true;
      chosen.push_back(valid_[best_i]);
    }
    return chosen;
  }

  const RandomForest& model_;
  const PatientRecord& record_;
  std::size_t outcome_;
  const CfConstraints& c_;
  const CfSearchOptions& opt_;
  std::mt19937_64 rng_;
  std::vector<double> original_;
  std::vector<Candidate> valid_;
  std::size_t evaluations_ = 0;
};

double round_to(double v, int precision) {
  const double p = std::pow(10.0, precision);
  return std::round(v * p) / p;
}

}  // namespace

CounterfactualReport find_counterfactuals(const RandomForest& model, const PatientRecord& record,
                                          std::string_view outcome,
                                          const CfConstraints& constraints,
                                          const CfSearchOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  const auto& schema = model.schema();
  validate_record(schema, record);
  const std::size_t o = schema.outcome_index(outcome);
  if (constraints.features.empty()) {
    throw Error(ErrorCode::kValidation, "mutable feature set is empty", "mutable");
  }
  for (const auto& mf : constraints.features) {
    if (mf.feature >= schema.size()) {
      throw Error(ErrorCode::kUnknownFeature, "mutable feature index out of range", "mutable");
    }
    const auto& spec = schema.feature(mf.feature);
    if (spec.kind != FeatureKind::kNumerical || !spec.is_lab()) {
      throw Error(ErrorCode::kValidation, "counterfactual features must be numerical labs",
                  spec.name);
    }
    if (!(mf.low <= mf.high && mf.low >= spec.min && mf.high <= spec.max && mf.scale > 0.0)) {
      throw Error(ErrorCode::kValidation, "box bounds must lie within the feature range",
                  spec.name);
    }
  }
  if (!(constraints.threshold > 0.0 && constraints.threshold <= 1.0)) {
    throw Error(ErrorCode::kValidation, "threshold must be in (0, 1]", "threshold");
  }
  if (options.k < 1) throw Error(ErrorCode::kValidation, "k must be at least 1", "k");

  CounterfactualReport report;
  report.outcome = schema.outcomes()[o];
  report.threshold = constraints.threshold;
  report.direction = constraints.direction;
  report.original_risk = model.predict_proba(record)[o];
  const bool high = report.original_risk >= constraints.threshold;
  if (constraints.direction == Direction::kDecrease && !high) {
    throw Error(ErrorCode::kPrecondition, "risk is already below the threshold", "direction");
  }
  if (constraints.direction == Direction::kIncrease && high) {
    throw Error(ErrorCode::kPrecondition, "risk is already at or above the threshold",
                "direction");
  }

  Search search(model, record, o, constraints, options);
  auto elites = search.run();
  std::size_t extra_evaluations = 0;

  auto rescore = [&](Candidate& cand) {
    search.score(cand);
    ++extra_evaluations;
    return cand.valid;
  };

  std::vector<Candidate> finished;
  for (auto& cand : elites) {
    if (finished.size() >= options.k) break;
    // Presentable values first, unless rounding loses validity.
    Candidate rounded = cand;
    for (std::size_t j = 0; j < rounded.genes.size(); ++j) {
      if (!search.is_changed(j, rounded.genes[j])) continue;
      const auto& mf = constraints.features[j];
      const int p = schema.feature(mf.feature).precision;
      double v = round_to(rounded.genes[j], p);
      const double step = std::pow(10.0, -p);
      if (v < mf.low) v += step;
      if (v > mf.high) v -= step;
      if (v >= mf.low && v <= mf.high) rounded.genes[j] = v;
    }
    if (rescore(rounded)) cand = rounded;

    // Revert single changes while validity holds, to a fixpoint.
    bool progress = true;
    while (progress) {
      progress = false;
      for (std::size_t j = 0; j < cand.genes.size(); ++j) {
        if (!search.is_changed(j, cand.genes[j])) continue;
        Candidate trial = cand;
        trial.genes[j] = search.original()[j];
        if (rescore(trial)) {
          cand = std::move(trial);
          progress = true;
        }
      }
    }
    if (!cand.valid || cand.changed == 0) continue;
    // Suggestions touching the same set of labs count as one.
    const bool duplicate = std::any_of(finished.begin(), finished.end(), [&](const Candidate& f) {
      for (std::size_t j = 0; j < f.genes.size(); ++j) {
        if (search.is_changed(j, f.genes[j]) != search.is_changed(j, cand.genes[j])) return false;
      }
      return true;
    });
    if (!duplicate) finished.push_back(cand);
  }

  std::stable_sort(finished.begin(), finished.end(), [](const Candidate& a, const Candidate& b) {
    if (a.changed != b.changed) return a.changed < b.changed;
    return a.l1 < b.l1;
  });

  for (const auto& cand : finished) {
    CounterfactualResult r;
    r.record = search.materialize(cand.genes);
    r.original_risk = report.original_risk;
    r.new_risk = cand.risk;
    r.valid = cand.valid;
    r.l1 = cand.l1;
    for (std::size_t j = 0; j < cand.genes.size(); ++j) {
      if (!search.is_changed(j, cand.genes[j])) continue;
      const auto& spec = schema.feature(constraints.features[j].feature);
      FeatureChange change;
      change.feature = spec.name;
      change.display_name = spec.display_name;
      change.unit = spec.unit;
      change.raw_value = record.values[constraints.features[j].feature];
      change.new_value = cand.genes[j];
      change.raw_text = display_value(spec, change.raw_value);
      change.new_text = display_value(spec, change.new_value);
      r.changes.push_back(std::move(change));
    }
    report.results.push_back(std::move(r));
  }

  report.evaluations = search.evaluations() + extra_evaluations;
  report.elapsed_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace riskexplain
