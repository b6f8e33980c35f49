#include "riskexplain/service.hpp"

#include <fstream>

#include "httplib.h"
#include "riskexplain/error.hpp"
#include "riskexplain/fingerprint.hpp"
#include "riskexplain/model_io.hpp"
#include "riskexplain/record_json.hpp"
#include "riskexplain/shap.hpp"

namespace riskexplain {

using nlohmann::json;

WhatIfResponse whatif_predict(const RandomForest& model, const WhatIfRequest& request) {
  const auto& schema = model.schema();
  validate_record(schema, request.base);
  PatientRecord updated = request.base;
  WhatIfResponse out;
  for (const auto& [name, value] : request.overrides) {
    const auto f = schema.find_feature(name);
    if (!f) throw Error(ErrorCode::kUnknownFeature, "unknown feature '" + name + "'", "overrides." + name);
    out.applied.push_back({name, request.base.values[*f], value});
    updated.values[*f] = value;
  }
  try {
    validate_record(schema, updated);
  } catch (const Error& e) {
    throw Error(e.code(), e.what(), "overrides." + e.field());
  }

  const auto before = model.predict_proba(request.base);
  const auto after = model.predict_proba(updated);
  std::vector<std::size_t> outcomes;
  if (request.outcome) {
    outcomes.push_back(schema.outcome_index(*request.outcome));
  } else {
    for (std::size_t k = 0; k < schema.outcomes().size(); ++k) outcomes.push_back(k);
  }
  for (const auto k : outcomes) {
    out.outcomes.push_back(schema.outcomes()[k]);
    out.original.push_back(before[k]);
    out.updated.push_back(after[k]);
  }
  return out;
}

namespace {

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound:
      return 404;
    case ErrorCode::kPrecondition:
    case ErrorCode::kDegenerateLabels:
      return 422;
    case ErrorCode::kInternal:
      return 500;
    default:
      return 400;
  }
}

bool labeled_header(const std::filesystem::path& path, const CohortSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string(), "dataset_path");
  std::string header;
  std::getline(in, header);
  std::vector<std::string> cells;
  std::string cell;
  for (const char c : header) {
    if (c == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (c != '"' && c != '\r') {
      cell += c;
    }
  }
  cells.push_back(cell);
  for (const auto& outcome : schema.outcomes()) {
    if (std::find(cells.begin(), cells.end(), outcome) == cells.end()) return false;
  }
  return true;
}

std::uint64_t request_seed(const json& body) {
  const auto digest = sha256(body.dump());
  std::uint64_t seed = 0;
  for (int i = 0; i < 8; ++i) seed = (seed << 8) | digest[static_cast<std::size_t>(i)];
  return seed;
}

template <typename T>
T field_or(const json& doc, const char* key, T fallback, const std::string& path) {
  if (!doc.is_object() || !doc.contains(key) || doc.at(key).is_null()) return fallback;
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::kValidation, std::string(key) + " has the wrong type", path + key);
  }
}

std::string required_string(const json& body, const char* key) {
  if (!body.contains(key) || !body.at(key).is_string()) {
    throw Error(ErrorCode::kValidation, std::string("'") + key + "' is required", key);
  }
  return body.at(key).get<std::string>();
}

PatientRecord resolve_record(const json& body, const ServiceSnapshot& snap) {
  if (body.contains("record_id")) {
    const auto& id = body.at("record_id");
    if (!id.is_string()) throw Error(ErrorCode::kValidation, "record_id must be text", "record_id");
    const auto row = snap.reference->find_record(id.get<std::string>());
    if (!row) throw Error(ErrorCode::kNotFound, "no record with id '" + id.get<std::string>() + "'", "record_id");
    return snap.reference->record(*row);
  }
  if (!body.contains("record")) throw Error(ErrorCode::kValidation, "'record' is required", "record");
  return record_from_json(snap.model->schema(), body.at("record"));
}

// RAII slot in the bounded pool of expensive jobs.
class JobSlot {
 public:
  explicit JobSlot(std::counting_semaphore<1024>& sem) : sem_(sem) { sem_.acquire(); }
  ~JobSlot() { sem_.release(); }
  JobSlot(const JobSlot&) = delete;
  JobSlot& operator=(const JobSlot&) = delete;

 private:
  std::counting_semaphore<1024>& sem_;
};

json risks_json(const std::vector<std::string>& outcomes, const std::vector<double>& risks) {
  json out = json::object();
  for (std::size_t k = 0; k < outcomes.size(); ++k) out[outcomes[k]] = risks[k];
  return out;
}

std::ptrdiff_t checked_jobs(std::ptrdiff_t jobs) {
  if (jobs < 1 || jobs > 1024) {
    throw Error(ErrorCode::kValidation, "max_jobs must be between 1 and 1024", "max_jobs");
  }
  return jobs;
}

}  // namespace

RiskService::RiskService(ServiceOptions options)
    : options_(std::move(options)), jobs_(checked_jobs(options_.max_jobs)) {}

json RiskService::load(const std::filesystem::path& model_path,
                       const std::filesystem::path& dataset_path) {
  auto model = std::make_shared<const RandomForest>(load_model(model_path));
  const bool labeled = labeled_header(dataset_path, model->schema());
  auto reference =
      std::make_shared<const Dataset>(load_csv(dataset_path, model->schema_ptr(), labeled));
  auto snap = make_snapshot(std::move(model), std::move(reference), model_path.string(),
                            dataset_path.string());
  json out = {{"model_fingerprint", snap->model_fingerprint},
              {"dataset_fingerprint", snap->dataset_fingerprint},
              {"records", snap->reference->size()}};
  std::lock_guard lock(mutex_);
  current_ = std::move(snap);
  return out;
}

void RiskService::install(std::shared_ptr<const RandomForest> model,
                          std::shared_ptr<const Dataset> reference) {
  auto snap = make_snapshot(std::move(model), std::move(reference), {}, {});
  std::lock_guard lock(mutex_);
  current_ = std::move(snap);
}

std::shared_ptr<const ServiceSnapshot> RiskService::snapshot() const {
  std::lock_guard lock(mutex_);
  return current_;
}

std::shared_ptr<const ServiceSnapshot> RiskService::make_snapshot(
    std::shared_ptr<const RandomForest> model, std::shared_ptr<const Dataset> reference,
    std::string model_path, std::string dataset_path) const {
  if (!model || !reference) throw Error(ErrorCode::kPrecondition, "model and reference are required");
  if (!(model->schema() == reference->schema())) {
    throw Error(ErrorCode::kSchemaMismatch, "reference dataset schema differs from the model's",
                "dataset_path");
  }
  auto snap = std::make_shared<ServiceSnapshot>();
  snap->model_fingerprint = model_fingerprint(*model);
  snap->dataset_fingerprint = dataset_fingerprint(*reference);
  snap->lime_background = std::make_shared<const LimeBackground>(*reference);
  snap->model = std::move(model);
  snap->reference = std::move(reference);
  snap->model_path = std::move(model_path);
  snap->dataset_path = std::move(dataset_path);
  return snap;
}

HttpReply RiskService::handle(std::string_view method, std::string_view path,
                              std::string_view body) {
  HttpReply reply;
  const auto snap = snapshot();
  try {
    json doc = json::object();
    if (method == "POST" && !body.empty()) {
      try {
        doc = json::parse(body);
      } catch (const json::parse_error& e) {
        throw Error(ErrorCode::kParse, std::string("request body is not valid JSON: ") + e.what(), "body");
      }
      if (!doc.is_object()) throw Error(ErrorCode::kParse, "request body must be an object", "body");
    }
    json out;
    if (path == "/admin/reload") {
      if (method != "POST") {
        reply.status = 405;
        throw Error(ErrorCode::kValidation, "/admin/reload expects POST", "method");
      }
      out = load(required_string(doc, "model_path"), required_string(doc, "dataset_path"));
    } else {
      if (!snap) throw Error(ErrorCode::kPrecondition, "no model is loaded", "model");
      out = route(method, path, doc, *snap, reply);
    }
    if (reply.content_type == "application/json") {
      if (!out.contains("model_fingerprint")) {
        const auto now = snapshot();
        out["model_fingerprint"] = now ? now->model_fingerprint : std::string();
      }
      reply.body = out.dump();
    }
  } catch (const Error& e) {
    if (reply.status == 200) reply.status = status_for(e.code());
    reply.content_type = "application/json";
    json out = error_to_json(e);
    out["model_fingerprint"] = snap ? snap->model_fingerprint : std::string();
    reply.body = out.dump();
  } catch (const std::exception& e) {
    reply.status = 500;
    reply.content_type = "application/json";
    json out = error_to_json(Error(ErrorCode::kInternal, e.what()));
    out["model_fingerprint"] = snap ? snap->model_fingerprint : std::string();
    reply.body = out.dump();
  }
  return reply;
}

json RiskService::route(std::string_view method, std::string_view path, const json& body,
                        const ServiceSnapshot& snap, HttpReply& reply) {
  auto expect = [&](std::string_view m) {
    if (method != m) {
      reply.status = 405;
      throw Error(ErrorCode::kValidation, std::string(path) + " expects " + std::string(m), "method");
    }
  };

  const auto& model = *snap.model;
  const auto& schema = model.schema();

  if (path == "/schema") {
    expect("GET");
    return schema_to_json(schema);
  }
  if (path == "/model-card" || path == "/model-card.html") {
    expect("GET");
    std::call_once(snap.card_once, [&] {
      if (!snap.reference->has_labels()) {
        throw Error(ErrorCode::kPrecondition, "the model card needs a labeled reference dataset",
                    "dataset_path");
      }
      CardConfig config;
      config.text = load_card_text(options_.card_template ? *options_.card_template
                                                          : demo_card_template_path());
      config.importance.sample_size = options_.card_importance_samples;
      config.timestamp = options_.card_timestamp;
      const auto card = build_model_card(model, *snap.reference, *snap.reference, config);
      snap.card = std::make_shared<const json>(card_to_json(card));
      snap.card_html = std::make_shared<const std::string>(render_html(card));
    });
    if (path == "/model-card.html") {
      reply.content_type = "text/html; charset=utf-8";
      reply.body = *snap.card_html;
      return nullptr;
    }
    return *snap.card;
  }
  if (path == "/predict") {
    expect("POST");
    const auto record = resolve_record(body, snap);
    return prediction_to_json(schema, model.predict_proba(record));
  }
  if (path == "/explain/lime") {
    expect("POST");
    const auto record = resolve_record(body, snap);
    const auto outcome = required_string(body, "outcome");
    const json cfg = body.contains("config") ? body.at("config") : json::object();
    LimeConfig config;
    config.n_samples = field_or<std::size_t>(cfg, "n_samples", config.n_samples, "config.");
    config.kernel_width = field_or<double>(cfg, "kernel_width", config.kernel_width, "config.");
    config.top_k = field_or<std::size_t>(cfg, "top_k", config.top_k, "config.");
    config.ridge_lambda = field_or<double>(cfg, "ridge_lambda", config.ridge_lambda, "config.");
    config.seed = field_or<std::uint64_t>(
        cfg, "seed", field_or<std::uint64_t>(body, "seed", request_seed(body), ""), "config.");
    config.background = snap.lime_background;
    JobSlot slot(jobs_);
    return attribution_to_json(explain_lime(model, record, outcome, config));
  }
  if (path == "/explain/shap") {
    expect("POST");
    const auto record = resolve_record(body, snap);
    const auto outcome = required_string(body, "outcome");
    ShapConfig config;
    const auto mode = field_or<std::string>(body, "mode", "tree", "");
    if (mode == "exact") {
      config.mode = ShapConfig::Mode::kExact;
    } else if (mode != "tree") {
      throw Error(ErrorCode::kValidation, "mode must be 'tree' or 'exact'", "mode");
    }
    config.max_exact_features =
        field_or<std::size_t>(body, "max_exact_features", config.max_exact_features, "");
    return attribution_to_json(explain_shap(model, record, outcome, config));
  }
  if (path == "/counterfactual") {
    expect("POST");
    const auto record = resolve_record(body, snap);
    const auto outcome = required_string(body, "outcome");
    const std::size_t o = schema.outcome_index(outcome);
    const json cons = body.contains("constraints") ? body.at("constraints") : json::object();
    const double threshold = field_or<double>(cons, "threshold", 0.5, "constraints.");
    const double low_q = field_or<double>(cons, "low_quantile", 0.01, "constraints.");
    const double high_q = field_or<double>(cons, "high_quantile", 0.99, "constraints.");
    Direction direction = model.predict_proba(record)[o] >= threshold ? Direction::kDecrease
                                                                      : Direction::kIncrease;
    if (const auto d = field_or<std::string>(cons, "direction", "", "constraints."); !d.empty()) {
      if (d == "decrease") {
        direction = Direction::kDecrease;
      } else if (d == "increase") {
        direction = Direction::kIncrease;
      } else {
        throw Error(ErrorCode::kValidation, "direction must be 'decrease' or 'increase'",
                    "constraints.direction");
      }
    }
    const auto features =
        field_or<std::vector<std::string>>(cons, "features", {}, "constraints.");
    const auto constraints =
        features.empty()
            ? make_constraints(*snap.reference, direction, threshold, low_q, high_q)
            : make_constraints(*snap.reference, features, direction, threshold, low_q, high_q);
    CfSearchOptions options;
    options.k = field_or<std::size_t>(body, "k", options.k, "");
    options.budget = field_or<std::size_t>(body, "budget", options.budget, "");
    options.seed = field_or<std::uint64_t>(body, "seed", request_seed(body), "");
    JobSlot slot(jobs_);
    return counterfactuals_to_json(find_counterfactuals(model, record, outcome, constraints, options));
  }
  if (path == "/whatif") {
    expect("POST");
    WhatIfRequest request;
    request.base = resolve_record(body, snap);
    if (body.contains("overrides")) {
      const auto& overrides = body.at("overrides");
      if (!overrides.is_object()) {
        throw Error(ErrorCode::kValidation, "overrides must be an object", "overrides");
      }
      for (const auto& [name, value] : overrides.items()) {
        const auto f = schema.find_feature(name);
        if (!f) throw Error(ErrorCode::kUnknownFeature, "unknown feature '" + name + "'", "overrides." + name);
        request.overrides[name] = value_from_json(schema.feature(*f), value, "overrides." + name);
      }
    }
    if (body.contains("outcome") && !body.at("outcome").is_null()) {
      request.outcome = required_string(body, "outcome");
    }
    const auto response = whatif_predict(model, request);
    json applied = json::array();
    for (const auto& a : response.applied) {
      const auto& spec = schema.feature(schema.feature_index(a.feature));
      applied.push_back({{"feature", a.feature},
                         {"original", value_to_json(spec, a.original)},
                         {"updated", value_to_json(spec, a.updated)}});
    }
    return {{"outcomes", response.outcomes},
            {"original", risks_json(response.outcomes, response.original)},
            {"updated", risks_json(response.outcomes, response.updated)},
            {"applied", applied}};
  }
  if (path == "/similar") {
    expect("POST");
    const auto record = resolve_record(body, snap);
    const auto criteria =
        criteria_from_json(body.contains("criteria") ? body.at("criteria") : json(nullptr));
    return summary_to_json(cohort_summary(model, *snap.reference, record, criteria));
  }
  reply.status = 404;
  throw Error(ErrorCode::kNotFound, "no route for " + std::string(method) + " " + std::string(path),
              "path");
}

HttpServer::HttpServer(RiskService& service) : server_(std::make_unique<httplib::Server>()) {
  auto forward = [&service](const httplib::Request& req, httplib::Response& res) {
    const auto reply = service.handle(req.method, req.path, req.body);
    res.status = reply.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(reply.body, reply.content_type);
  };
  server_->Get(".*", forward);
  server_->Post(".*", forward);
  server_->Options(".*", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? server_->bind_to_any_port(host)
                              : (server_->bind_to_port(host, port) ? port : -1);
  if (bound <= 0) {
    throw Error(ErrorCode::kIo, "cannot listen on " + host + ":" + std::to_string(port), "port");
  }
  return bound;
}

void HttpServer::run() { server_->listen_after_bind(); }

void HttpServer::wait_until_ready() const { server_->wait_until_ready(); }

void HttpServer::stop() { server_->stop(); }

void serve_http(RiskService& service, const std::string& host, int port) {
  HttpServer server(service);
  server.bind(host, port);
  server.run();
}

}  // namespace riskexplain
