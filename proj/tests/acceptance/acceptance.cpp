// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <string>

#include "riskexplain/cohort.hpp"
#include "riskexplain/counterfactual.hpp"
#include "riskexplain/lime.hpp"
#include "riskexplain/metrics.hpp"
#include "riskexplain/model_card.hpp"
#include "riskexplain/model_io.hpp"
#include "riskexplain/record_json.hpp"
#include "riskexplain/service.hpp"
#include "riskexplain/shap.hpp"
#include "riskexplain/synthetic.hpp"
#include "support.hpp"

using namespace riskexplain;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const std::function<Outcome()>& check) {
  const auto start = Clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  if (!o.pass) ++failures;
  std::printf("%s %2d %s (%.1fs) %s\n", o.pass ? "PASS" : "FAIL", id, name, secs, o.detail.c_str());
  std::fflush(stdout);
}

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// The desk-scale cohort every quantitative criterion shares.
struct Desk {
  SchemaPtr schema = std::make_shared<const CohortSchema>(load_schema(default_schema_path()));
  GeneratorConfig config = load_generator_config(default_generator_path());
  Dataset train = generate_synthetic_cohort(schema, config, 2024, 10000).dataset;
  Dataset held_out = generate_synthetic_cohort(schema, config, 4242, 3000).dataset;
  ForestParams params{200, 12, 5, 0.0};
  std::unique_ptr<RandomForest> model;
  double train_eval_seconds = 0.0;
  std::optional<double> dominant_auroc;
};

// Trained on first use; the training time feeds criterion 6.
Desk& desk() {
  static Desk d;
  if (!d.model) {
    const auto start = Clock::now();
    d.model = std::make_unique<RandomForest>(train_forest(d.train, d.params, 7));
    const auto aurocs = evaluate_auroc(*d.model, d.held_out);
    d.train_eval_seconds = seconds_since(start);
    d.dominant_auroc = aurocs[d.schema->outcome_index("prolonged_mv")].auroc;
  }
  return d;
}

// ---- criteria ----

Outcome shap_oracle() {
  const auto start = Clock::now();
  std::mt19937_64 rng(1);
  int instances = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 240; ++trial) {
    const std::size_t width = 4 + trial % 9;  // 4..12 encoded columns
    const auto schema = fixtures::width_schema(width);
    const auto model = fixtures::random_forest(schema, 500 + trial, 1 + trial % 5, 1 + trial % 4);
    const auto record = fixtures::random_record(*schema, rng);
    for (const auto& outcome : schema->outcomes()) {
      const auto t = explain_shap_tree(model, record, outcome);
      const auto e = explain_shap_exact(model, record, outcome);
      for (const auto& c : t.contributions) worst = std::max(worst, std::abs(c.value - e.find(c.feature)->value));
    }
    ++instances;
  }
  const double secs = seconds_since(start);
  return {instances >= 200 && worst <= 1e-9 && secs < 60.0,
          fmt("instances=%d max|tree-exact|=%.2e runtime=%.1fs", instances, worst, secs)};
}

Outcome forest_learnability() {
  auto& d = desk();
  const double a = d.dominant_auroc.value_or(0.0);
  return {a >= 0.85 && d.train_eval_seconds < 60.0,
          fmt("prolonged_mv held-out AUROC=%.4f train+eval=%.1fs (200 trees, depth 12, 10000 records)",
              a, d.train_eval_seconds)};
}

Outcome shap_local_accuracy() {
  auto& d = desk();
  const auto start = Clock::now();
  std::vector<PatientRecord> records(d.held_out.records().begin(), d.held_out.records().begin() + 1000);
  const auto phi = shap_batch(*d.model, records);
  const std::size_t m = d.schema->outcomes().size();
  const std::size_t f = d.schema->size();
  double worst = 0.0;
  const auto base = tree_shap(*d.model, d.model->encode(records[0])).base;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto p = d.model->predict_proba(records[i]);
    for (std::size_t k = 0; k < m; ++k) {
      double sum = base[k];
      for (std::size_t j = 0; j < f; ++j) sum += phi[i][k * f + j];
      worst = std::max(worst, std::abs(sum - p[k]));
    }
  }
  // The public per-record path asserts the same identity on every call.
  for (std::size_t i = 0; i < 20; ++i) {
    const auto a = explain_shap_tree(*d.model, records[i], "prolonged_mv");
    double sum = a.base_value;
    for (const auto& c : a.contributions) sum += c.value;
    worst = std::max(worst, std::abs(sum - a.prediction));
  }
  const double secs = seconds_since(start);
  return {worst <= 1e-9 && secs < 120.0,
          fmt("records=1000 outcomes=%zu max|base+sum(phi)-p|=%.2e runtime=%.1fs", m, worst, secs)};
}

Outcome lime_sanity() {
  const auto background = std::make_shared<const LimeBackground>(fixtures::oracle_training(2000, 42));
  LimeConfig config;
  config.background = background;
  double worst = 0.0;
  const auto constant = fixtures::constant_model(0.4);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    config.seed = seed;
    for (const auto& c : explain_lime(constant, fixtures::oracle_record(319), "risk", config).contributions) {
      worst = std::max(worst, std::abs(c.value));
    }
  }
  const auto split = fixtures::glucose_split_model();
  int good = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    config.seed = 1000 + seed;
    const double glucose = seed % 2 ? 319.0 : 80.0;
    const auto a = explain_lime(split, fixtures::oracle_record(glucose), "risk", config);
    const bool first = !a.contributions.empty() && a.contributions[0].feature == "serum_glucose";
    const double leaf = glucose > 150 ? 0.9 : 0.1;
    good += first && ((a.contributions[0].value > 0) == (leaf > a.base_value));
  }
  return {worst <= 0.005 && good >= 95,
          fmt("constant max|contribution|=%.2e single-split first+sign=%d/100", worst, good)};
}

Outcome counterfactual_soundness() {
  auto& d = desk();
  const auto& model = *d.model;
  const std::size_t o = d.schema->outcome_index("prolonged_mv");
  // Random synthetic records, kept when high-risk.
  std::vector<PatientRecord> high;
  for (std::uint64_t seed = 90; high.size() < 500; ++seed) {
    const auto batch = generate_synthetic_cohort(d.schema, d.config, seed, 5000).dataset;
    const auto preds = model.predict_batch(batch.records());
    for (std::size_t i = 0; i < batch.size() && high.size() < 500; ++i) {
      if (preds[i][o] >= 0.5) high.push_back(batch.record(i));
    }
  }
  const auto constraints = make_constraints(d.train, Direction::kDecrease, 0.5);
  std::size_t results = 0, violations = 0, with_result = 0;
  for (std::size_t i = 0; i < high.size(); ++i) {
    CfSearchOptions options;
    options.seed = i;
    options.budget = 5000;
    const auto rep = find_counterfactuals(model, high[i], "prolonged_mv", constraints, options);
    with_result += !rep.results.empty();
    for (const auto& r : rep.results) {
      ++results;
      bool ok = r.valid;
      const double rescored = model.predict_proba(r.record)[o];  // independent re-score
      ok = ok && rescored < 0.5;
      for (std::size_t f = 0; f < d.schema->size(); ++f) {
        if (r.record.values[f] == high[i].values[f]) continue;
        const auto& spec = d.schema->feature(f);
        const MutableFeature* box = nullptr;
        for (const auto& m : constraints.features) {
          if (m.feature == f) box = &m;
        }
        ok = ok && spec.is_lab() && spec.is_mutable && box && *r.record.values[f] >= box->low &&
             *r.record.values[f] <= box->high;
        auto reverted = r.record;
        reverted.values[f] = high[i].values[f];
        ok = ok && model.predict_proba(reverted)[o] >= 0.5;  // local minimality
      }
      violations += !ok;
    }
  }
  return {violations == 0,
          fmt("records=500 results=%zu violations=%zu success rate=%.1f%% (reported)", results, violations,
              100.0 * static_cast<double>(with_result) / 500.0)};
}

Outcome counterfactual_oracle() {
  const auto model = fixtures::glucose_split_model();
  const auto training = fixtures::oracle_training(2000, 42);
  const auto constraints = make_constraints(training, Direction::kDecrease);
  int flips = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CfSearchOptions options;
    options.seed = seed;
    const auto rep = find_counterfactuals(model, fixtures::oracle_record(319), "risk", constraints, options);
    if (rep.results.empty() || rep.evaluations > options.budget + options.population) continue;
    const auto& r = rep.results.front();
    flips += r.changes.size() == 1 && r.changes[0].feature == "serum_glucose" && r.changes[0].new_value <= 150.0 &&
             r.new_risk == 0.1;
  }
  return {flips >= 99, fmt("one-feature glucose flips=%d/100", flips)};
}

Outcome auroc_oracle() {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<std::uint8_t> y{0, 0, 1, 1};
  const bool example = auroc(s, y) == 0.75;
  std::mt19937_64 rng(77);
  int agree = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng() % 40;
    std::vector<double> sc(n);
    std::vector<std::uint8_t> lab(n);
    for (std::size_t i = 0; i < n; ++i) {
      sc[i] = static_cast<double>(rng() % 10) / 10.0;
      lab[i] = rng() % 2;
    }
    lab[0] = 0;
    lab[1] = 1;
    double wins = 0, pairs = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (lab[i] == 1 && lab[j] == 0) {
          pairs += 1;
          wins += sc[i] > sc[j] ? 1.0 : sc[i] == sc[j] ? 0.5 : 0.0;
        }
      }
    }
    agree += std::abs(*auroc(sc, lab) - wins / pairs) <= 1e-12;
  }
  return {example && agree == 100, fmt("example=%s brute-force agreement=%d/100", example ? "0.75" : "wrong", agree)};
}

Outcome similar_oracle() {
  const SimilarityCriteria defaults;
  const bool paper_defaults = defaults.age_tolerance == 5.0 && defaults.comorbidity_threshold == 0.6 &&
                              defaults.exact_match == std::vector<std::string>{"race", "sex", "surgery_type"};
  auto& d = desk();
  const auto& schema = *d.schema;
  std::vector<std::size_t> comorbid;
  for (std::size_t f = 0; f < schema.size(); ++f) {
    if (schema.feature(f).has_tag(FeatureTag::kComorbidity)) comorbid.push_back(f);
  }
  const std::size_t age = schema.feature_index("age");
  const std::vector<std::size_t> exact{schema.feature_index("race"), schema.feature_index("sex"),
                                       schema.feature_index("surgery_type")};
  std::mt19937_64 rng(5);
  int equal = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng() % 200;
    auto ds = generate_synthetic_cohort(d.schema, d.config, 700 + t, n).dataset;
    // Coarsen so that matches are common.
    auto rows = ds.records();
    for (auto& r : rows) {
      r.values[age] = 60.0 + static_cast<double>(rng() % 13);
      r.values[exact[0]] = static_cast<double>(rng() % 2);
      r.values[exact[2]] = static_cast<double>(rng() % 2);
    }
    const Dataset table(d.schema, rows);
    const auto& index = table.record(rng() % n);
    std::set<std::string> expected;
    for (const auto& r : table.records()) {
      if (r.id == index.id || std::abs(*r.values[age] - *index.values[age]) > 5.0) continue;
      bool same = true;
      for (auto f : exact) same = same && r.values[f] == index.values[f];
      std::size_t agree = 0;
      for (auto f : comorbid) agree += r.values[f] == index.values[f];
      if (same && static_cast<double>(agree) / static_cast<double>(comorbid.size()) >= 0.6) expected.insert(r.id);
    }
    std::set<std::string> got;
    for (auto i : find_similar(table, index, defaults)) got.insert(table.record(i).id);
    equal += got == expected;
  }
  return {paper_defaults && equal == 100, fmt("default criteria %s, set equality=%d/100",
                                              paper_defaults ? "ok" : "wrong", equal)};
}

Outcome importance_ground_truth() {
  auto config = fixtures::oracle_generator();
  config.marginals["copd"].p = 0.0;  // zero coefficient and constant, so no tree can split on it
  config.outcomes["risk"] = {-0.8, {{"serum_glucose", std::nullopt, 1.8},
                                    {"hemoglobin", std::nullopt, -0.7},
                                    {"age", std::nullopt, 0.4},
                                    {"diabetes", std::nullopt, 0.5}}};
  int first = 0;
  bool dummy_zero = true;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto ds = generate_synthetic_cohort(fixtures::oracle_schema(), config, 100 + seed, 4000).dataset;
    const auto model = train_forest(ds, {50, 10, 5, 0.0}, seed);
    ImportanceOptions options;
    options.seed = seed;
    options.sample_size = 500;
    const auto ranked = global_importance(model, ds, std::nullopt, options)[0].ranking;
    first += ranked.front().first == "serum_glucose";
    for (const auto& [name, v] : ranked) {
      if (name == "copd") dummy_zero = dummy_zero && v == 0.0 && !model.uses_feature(9);
    }
  }
  return {first >= 9 && dummy_zero,
          fmt("dominant feature first=%d/10 zero-coefficient absent feature exactly 0: %s", first,
              dummy_zero ? "yes" : "no")};
}

Outcome determinism() {
  auto& d = desk();
  const auto dir = std::filesystem::temp_directory_path() / "riskexplain_acceptance";
  std::filesystem::create_directories(dir);
  save_model(*d.model, dir / "model.bin");
  const auto loaded = load_model(dir / "model.bin");
  std::filesystem::remove_all(dir);
  std::size_t identical = 0;
  for (std::size_t i = 0; i < 1000; ++i) {
    const auto a = d.model->predict_proba(d.held_out.record(i)).probabilities;
    const auto b = loaded.predict_proba(d.held_out.record(i)).probabilities;
    identical += std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
  }
  const ForestParams params{40, 12, 5, 0.0};
  const bool same = serialize_model(train_forest(d.train, params, 11, Execution::kSerial)) ==
                    serialize_model(train_forest(d.train, params, 11, Execution::kParallel));
  return {identical == 1000 && same,
          fmt("bit-identical after reload=%zu/1000 serial==parallel serialization: %s", identical,
              same ? "yes" : "no")};
}

Outcome card_integrity() {
  auto& d = desk();
  const Dataset dev = d.train;
  const Dataset val = d.held_out;
  CardConfig config;
  config.text = load_card_text(demo_card_template_path());
  config.importance.sample_size = 300;
  config.timestamp = "2026-01-01T00:00:00Z";
  const auto card = build_model_card(*d.model, dev, val, config);
  bool exact = true;
  for (std::size_t k = 0; k < d.schema->outcomes().size(); ++k) {
    std::size_t dp = 0, vp = 0;
    for (std::size_t i = 0; i < dev.size(); ++i) dp += dev.label(i, k);
    for (std::size_t i = 0; i < val.size(); ++i) vp += val.label(i, k);
    exact = exact && card.outcomes[k].prevalence_dev == static_cast<double>(dp) / static_cast<double>(dev.size()) &&
            card.outcomes[k].prevalence_val == static_cast<double>(vp) / static_cast<double>(val.size());
  }
  auto again = build_model_card(*d.model, dev, val, [&] {
    auto c = config;
    c.timestamp = "2027-06-30T12:00:00Z";
    return c;
  }());
  again.generated_at = card.generated_at;
  const bool identical = card_to_json(card).dump() == card_to_json(again).dump() &&
                         render_html(card) == render_html(again) && render_markdown(card) == render_markdown(again);
  return {exact && identical, fmt("prevalences exact: %s regeneration identical modulo timestamp: %s",
                                  exact ? "yes" : "no", identical ? "yes" : "no")};
}

Outcome whatif_identity() {
  auto& d = desk();
  RiskService service;
  service.install(std::shared_ptr<const RandomForest>(d.model.get(), [](const RandomForest*) {}),
                  std::make_shared<const Dataset>(d.held_out));
  const auto records = generate_synthetic_cohort(d.schema, d.config, 31337, 1000).dataset;
  std::size_t same = 0;
  for (const auto& r : records.records()) {
    const nlohmann::json body = {{"record", record_to_json(*d.schema, r)}, {"overrides", nlohmann::json::object()}};
    const auto reply = service.handle("POST", "/whatif", body.dump());
    const auto doc = nlohmann::json::parse(reply.body);
    WhatIfResponse direct = whatif_predict(*d.model, {r, {}, std::nullopt});
    same += reply.status == 200 && doc["original"] == doc["updated"] && direct.original == direct.updated;
  }
  return {same == 1000, fmt("identical before/after=%zu/1000", same)};
}

}  // namespace

int main() {
  report(1, "SHAP oracle equivalence", shap_oracle);
  desk();  // trained outside the timed window of criterion 2
  report(2, "SHAP local accuracy", shap_local_accuracy);
  report(3, "LIME sanity", lime_sanity);
  report(4, "counterfactual soundness", counterfactual_soundness);
  report(5, "counterfactual single-split oracle", counterfactual_oracle);
  report(6, "forest learnability", forest_learnability);
  report(7, "AUROC oracle", auroc_oracle);
  report(8, "similar-patient oracle", similar_oracle);
  report(9, "global importance ground truth", importance_ground_truth);
  report(10, "determinism and persistence", determinism);
  report(11, "model card integrity", card_integrity);
  report(12, "what-if identity", whatif_identity);
  std::printf("%s: %d failing\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
