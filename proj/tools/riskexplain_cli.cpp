#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "riskexplain/cohort.hpp"
#include "riskexplain/counterfactual.hpp"
#include "riskexplain/error.hpp"
#include "riskexplain/fingerprint.hpp"
#include "riskexplain/lime.hpp"
#include "riskexplain/metrics.hpp"
#include "riskexplain/model_card.hpp"
#include "riskexplain/model_io.hpp"
#include "riskexplain/record_json.hpp"
#include "riskexplain/service.hpp"
#include "riskexplain/shap.hpp"
#include "riskexplain/synthetic.hpp"

namespace rx = riskexplain;
using nlohmann::json;

namespace {

struct Globals {
  std::string schema_path = rx::default_schema_path().string();
  std::string model_path;
  std::uint64_t seed = 0;
  std::string format = "text";
  int threads = 0;
};

bool as_json(const Globals& g) { return g.format == "json"; }

std::string pct(double p) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << 100.0 * p << "%";
  return os.str();
}

std::string num(double v, int precision = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

rx::SchemaPtr load_schema_ptr(const std::string& path) {
  return std::make_shared<const rx::CohortSchema>(rx::load_schema(path));
}

rx::RandomForest require_model(const Globals& g) {
  if (g.model_path.empty()) throw rx::Error(rx::ErrorCode::kValidation, "--model is required", "model");
  return rx::load_model(g.model_path);
}

bool has_outcome_columns(const std::string& path, const rx::CohortSchema& schema) {
  std::ifstream in(path);
  if (!in) throw rx::Error(rx::ErrorCode::kIo, "cannot open " + path, "data");
  std::string header;
  std::getline(in, header);
  for (const auto& o : schema.outcomes()) {
    if (header.find(o) == std::string::npos) return false;
  }
  return true;
}

rx::Dataset load_data(const std::string& path, const rx::SchemaPtr& schema) {
  return rx::load_csv(path, schema, has_outcome_columns(path, *schema));
}

// --record-id picks from the dataset; --record reads a JSON record file.
rx::PatientRecord pick_record(const rx::Dataset& data, const std::string& id,
                              const std::string& record_file) {
  if (!record_file.empty()) {
    std::ifstream in(record_file);
    if (!in) throw rx::Error(rx::ErrorCode::kIo, "cannot open " + record_file, "record");
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw rx::Error(rx::ErrorCode::kParse, "record file is not valid JSON", "record");
    return rx::record_from_json(data.schema(), doc);
  }
  if (id.empty()) throw rx::Error(rx::ErrorCode::kValidation, "--record-id or --record is required", "record");
  const auto row = data.find_record(id);
  if (!row) throw rx::Error(rx::ErrorCode::kNotFound, "no record with id '" + id + "'", "record_id");
  return data.record(*row);
}

void print_attribution(const rx::Attribution& a) {
  std::cout << rx::to_string(a.method) << " : " << a.outcome << "  prediction " << pct(a.prediction)
            << "  base " << pct(a.base_value);
  if (a.surrogate_r2) std::cout << "  surrogate R2 " << num(*a.surrogate_r2, 3);
  std::cout << "\n";
  for (const auto& c : a.contributions) {
    std::cout << "  " << (c.value >= 0 ? "+" : "") << num(c.value) << "  " << c.condition << "\n";
  }
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw rx::Error(rx::ErrorCode::kIo, "cannot write " + path, "out");
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explainable clinical risk engine"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--schema", g.schema_path, "Cohort schema JSON");
  app.add_option("--model", g.model_path, "Model file");
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"text", "json"}));
  app.add_option("--threads", g.threads, "OpenMP threads (0 = runtime default)");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a labeled synthetic cohort");
  std::size_t synth_n = 1000;
  std::string generator_path = rx::default_generator_path().string();
  std::string synth_out;
  synth->add_option("-n,--records", synth_n, "Number of records");
  synth->add_option("--generator", generator_path, "Generator configuration");
  synth->add_option("-o,--out", synth_out, "Output CSV (stdout when omitted)");

  // train
  auto* train = app.add_subcommand("train", "Train a random forest");
  std::string train_data;
  std::string train_out;
  rx::ForestParams params;
  bool serial = false;
  train->add_option("--data", train_data, "Labeled training CSV")->required();
  train->add_option("-o,--out", train_out, "Model output path")->required();
  train->add_option("--trees", params.n_trees, "Number of trees");
  train->add_option("--max-depth", params.max_depth, "Maximum tree depth");
  train->add_option("--min-leaf", params.min_leaf, "Minimum samples per leaf");
  train->add_option("--feature-fraction", params.features_per_split_fraction,
                    "Columns tried per split (0 = sqrt)");
  train->add_flag("--serial", serial, "Use the serial reference trainer");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "AUROC per outcome on a labeled CSV");
  std::string eval_data;
  evaluate->add_option("--data", eval_data, "Labeled CSV")->required();

  // explain
  auto* explain = app.add_subcommand("explain", "Explain one prediction");
  std::string method;
  std::string data_path;
  std::string record_id;
  std::string record_file;
  std::string outcome;
  std::size_t lime_samples = 5000;
  std::size_t top_k = 10;
  bool exact = false;
  explain->add_option("method", method, "lime or shap")->required()->check(CLI::IsMember({"lime", "shap"}));
  explain->add_option("--data", data_path, "Reference CSV (LIME background, record lookup)")->required();
  explain->add_option("--record-id", record_id, "Record id in --data");
  explain->add_option("--record", record_file, "Record JSON file");
  explain->add_option("--outcome", outcome, "Outcome name")->required();
  explain->add_option("--samples", lime_samples, "LIME perturbation samples");
  explain->add_option("--top-k", top_k, "LIME contributions reported");
  explain->add_flag("--exact", exact, "Exact Shapley enumeration (small models only)");

  // counterfactual
  auto* cf = app.add_subcommand("counterfactual", "Search lab changes that flip a prediction");
  double threshold = 0.5;
  std::string direction = "decrease";
  rx::CfSearchOptions cf_options;
  cf->add_option("--data", data_path, "Training CSV for percentile bounds")->required();
  cf->add_option("--record-id", record_id, "Record id in --data");
  cf->add_option("--record", record_file, "Record JSON file");
  cf->add_option("--outcome", outcome, "Outcome name")->required();
  cf->add_option("--threshold", threshold, "Risk threshold");
  cf->add_option("--direction", direction, "decrease or increase")
      ->check(CLI::IsMember({"decrease", "increase"}));
  cf->add_option("-k", cf_options.k, "Number of suggestions");
  cf->add_option("--budget", cf_options.budget, "Model evaluation budget");

  // card
  auto* card = app.add_subcommand("card", "Build a model card");
  std::string dev_path;
  std::string val_path;
  std::string template_path = rx::demo_card_template_path().string();
  std::string card_out;
  std::string card_render = "markdown";
  std::string timestamp;
  std::size_t card_samples = 2000;
  card->add_option("--dev", dev_path, "Development CSV")->required();
  card->add_option("--val", val_path, "Validation CSV")->required();
  card->add_option("--template", template_path, "Card text template JSON");
  card->add_option("--render", card_render, "json, markdown or html")
      ->check(CLI::IsMember({"json", "markdown", "html"}));
  card->add_option("-o,--out", card_out, "Output file (stdout when omitted)");
  card->add_option("--timestamp", timestamp, "Fixed generation timestamp");
  card->add_option("--samples", card_samples, "Records sampled for importance");

  // similar
  auto* similar = app.add_subcommand("similar", "Summarize similar patients");
  rx::SimilarityCriteria criteria;
  similar->add_option("--data", data_path, "Reference CSV")->required();
  similar->add_option("--record-id", record_id, "Record id in --data");
  similar->add_option("--record", record_file, "Record JSON file");
  similar->add_option("--age-tolerance", criteria.age_tolerance, "Years");
  similar->add_option("--comorbidity-threshold", criteria.comorbidity_threshold, "Agreement fraction");
  similar->add_option("--exact-match", criteria.exact_match, "Features that must match exactly");

  // serve
  auto* serve = app.add_subcommand("serve", "Serve the HTTP JSON API");
  std::string host = "127.0.0.1";
  int port = 8080;
  rx::ServiceOptions service_options;
  std::string serve_template;
  serve->add_option("--data", data_path, "Reference CSV")->required();
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port");
  serve->add_option("--max-jobs", service_options.max_jobs, "Concurrent LIME/counterfactual jobs");
  serve->add_option("--card-template", serve_template, "Card text template JSON");
  serve->add_option("--card-samples", service_options.card_importance_samples,
                    "Records sampled for card importance");

  CLI11_PARSE(app, argc, argv);

  try {
    rx::set_thread_count(g.threads);
    if (*synth) {
      const auto schema = load_schema_ptr(g.schema_path);
      const auto config = rx::load_generator_config(generator_path);
      const auto cohort = rx::generate_synthetic_cohort(schema, config, g.seed, synth_n);
      if (synth_out.empty()) {
        rx::write_csv(std::cout, cohort.dataset);
      } else {
        rx::save_csv(synth_out, cohort.dataset);
        if (as_json(g)) {
          std::cout << json{{"records", synth_n}, {"path", synth_out},
                            {"dataset_fingerprint", rx::dataset_fingerprint(cohort.dataset)}}
                           .dump(2)
                    << "\n";
        } else {
          std::cout << "wrote " << synth_n << " records to " << synth_out << "\n";
        }
      }
    } else if (*train) {
      const auto schema = load_schema_ptr(g.schema_path);
      const auto data = rx::load_csv(train_data, schema, true);
      const auto model = rx::train_forest(data, params, g.seed,
                                          serial ? rx::Execution::kSerial : rx::Execution::kParallel);
      rx::save_model(model, train_out);
      const auto fp = rx::model_fingerprint(model);
      if (as_json(g)) {
        std::cout << json{{"model_fingerprint", fp}, {"path", train_out},
                          {"trees", model.trees().size()}, {"records", data.size()}}
                         .dump(2)
                  << "\n";
      } else {
        std::cout << "trained " << model.trees().size() << " trees on " << data.size()
                  << " records\nmodel " << fp << "\n";
      }
    } else if (*evaluate) {
      const auto model = require_model(g);
      const auto data = rx::load_csv(eval_data, model.schema_ptr(), true);
      const auto results = rx::evaluate_auroc(model, data);
      if (as_json(g)) {
        json out = json::object();
        for (const auto& r : results) out[r.outcome] = r.auroc ? json(*r.auroc) : json(nullptr);
        std::cout << json{{"auroc", out}, {"model_fingerprint", rx::model_fingerprint(model)}}.dump(2)
                  << "\n";
      } else {
        for (const auto& r : results) {
          std::cout << std::left << std::setw(16) << r.outcome
                    << (r.auroc ? num(*r.auroc) : std::string("undefined")) << "\n";
        }
      }
    } else if (*explain) {
      const auto model = require_model(g);
      const auto data = load_data(data_path, model.schema_ptr());
      const auto record = pick_record(data, record_id, record_file);
      rx::Attribution a;
      if (method == "lime") {
        rx::LimeConfig config;
        config.n_samples = lime_samples;
        config.top_k = top_k;
        config.seed = g.seed;
        config.background = std::make_shared<const rx::LimeBackground>(data);
        a = rx::explain_lime(model, record, outcome, config);
      } else {
        rx::ShapConfig config;
        if (exact) {
          config.mode = rx::ShapConfig::Mode::kExact;
          config.max_exact_features = rx::kMaxExactFeatures;
        }
        a = rx::explain_shap(model, record, outcome, config);
      }
      if (as_json(g)) {
        std::cout << rx::attribution_to_json(a).dump(2) << "\n";
      } else {
        print_attribution(a);
      }
    } else if (*cf) {
      const auto model = require_model(g);
      const auto data = load_data(data_path, model.schema_ptr());
      const auto record = pick_record(data, record_id, record_file);
      const auto dir = direction == "increase" ? rx::Direction::kIncrease : rx::Direction::kDecrease;
      const auto constraints = rx::make_constraints(data, dir, threshold);
      cf_options.seed = g.seed;
      const auto report = rx::find_counterfactuals(model, record, outcome, constraints, cf_options);
      if (as_json(g)) {
        std::cout << rx::counterfactuals_to_json(report).dump(2) << "\n";
      } else if (report.results.empty()) {
        std::cout << "no suggestion found (" << report.evaluations << " evaluations)\n";
      } else {
        for (const auto& r : report.results) {
          std::cout << "risk of " << report.outcome << " would " << rx::to_string(report.direction)
                    << " from " << pct(r.original_risk) << " to " << pct(r.new_risk) << "\n";
          std::cout << "  " << std::left << std::setw(28) << "Feature" << std::setw(18)
                    << "Raw Value" << "New Value\n";
          for (const auto& c : r.changes) {
            std::cout << "  " << std::setw(28) << c.display_name << std::setw(18) << c.raw_text
                      << c.new_text << "\n";
          }
        }
      }
    } else if (*card) {
      const auto model = require_model(g);
      const auto dev = rx::load_csv(dev_path, model.schema_ptr(), true);
      const auto val = rx::load_csv(val_path, model.schema_ptr(), true);
      rx::CardConfig config;
      config.text = rx::load_card_text(template_path);
      config.importance.sample_size = card_samples;
      config.importance.seed = g.seed;
      if (!timestamp.empty()) config.timestamp = timestamp;
      const auto built = rx::build_model_card(model, dev, val, config);
      if (card_render == "json" || as_json(g)) {
        write_output(card_out, rx::card_to_json(built).dump(2) + "\n");
      } else if (card_render == "html") {
        write_output(card_out, rx::render_html(built));
      } else {
        write_output(card_out, rx::render_markdown(built));
      }
    } else if (*similar) {
      const auto model = require_model(g);
      const auto data = load_data(data_path, model.schema_ptr());
      const auto record = pick_record(data, record_id, record_file);
      const auto summary = rx::cohort_summary(model, data, record, criteria);
      if (as_json(g)) {
        std::cout << rx::summary_to_json(summary).dump(2) << "\n";
      } else {
        std::cout << "Similar patient outcomes (" << summary.matched << " cases found)\n";
        std::cout << "  age within " << summary.criteria.age_tolerance << " years; same";
        for (const auto& f : summary.criteria.exact_match) std::cout << " " << f;
        std::cout << "; comorbidities " << num(100.0 * summary.criteria.comorbidity_threshold, 0)
                  << "% match\n";
        for (std::size_t k = 0; k < summary.outcomes.size(); ++k) {
          std::cout << "  " << std::left << std::setw(16) << summary.outcomes[k] << "patient "
                    << std::setw(8) << pct(summary.index_risk[k]);
          if (summary.mean_predicted_risk) {
            std::cout << "cohort " << std::setw(8) << pct((*summary.mean_predicted_risk)[k]);
          }
          if (summary.observed_prevalence) {
            std::cout << "observed " << pct((*summary.observed_prevalence)[k]);
          }
          std::cout << "\n";
        }
      }
    } else if (*serve) {
      if (g.model_path.empty()) throw rx::Error(rx::ErrorCode::kValidation, "--model is required", "model");
      if (!serve_template.empty()) service_options.card_template = serve_template;
      rx::RiskService service(service_options);
      const auto loaded = service.load(g.model_path, data_path);
      std::cerr << "serving " << loaded.dump() << " on " << host << ":" << port << "\n";
      rx::serve_http(service, host, port);
    }
  } catch (const rx::Error& e) {
    std::cerr << rx::error_to_json(e).dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << rx::error_to_json(rx::Error(rx::ErrorCode::kInternal, e.what())).dump() << "\n";
    return 1;
  }
  return 0;
}
