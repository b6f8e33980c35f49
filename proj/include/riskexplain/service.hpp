#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>

#include "riskexplain/counterfactual.hpp"
#include "riskexplain/dataset.hpp"
#include "riskexplain/forest.hpp"
#include "riskexplain/lime.hpp"
#include "riskexplain/model_card.hpp"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace riskexplain {

struct WhatIfRequest {
  PatientRecord base;
  std::map<std::string, Value> overrides;
  std::optional<std::string> outcome;
};

struct AppliedOverride {
  std::string feature;
  Value original;
  Value updated;
};

struct WhatIfResponse {
  std::vector<std::string> outcomes;
  std::vector<double> original;
  std::vector<double> updated;
  std::vector<AppliedOverride> applied;
};

// Scores the base record and the overridden copy. Overrides are validated
// against the schema (kValidation names the feature).
WhatIfResponse whatif_predict(const RandomForest& model, const WhatIfRequest& request);

// The (model, reference dataset) pair a request is served against. Swapped
// as a whole on reload; never mutated.
struct ServiceSnapshot {
  std::shared_ptr<const RandomForest> model;
  std::shared_ptr<const Dataset> reference;
  std::shared_ptr<const LimeBackground> lime_background;
  std::string model_fingerprint;
  std::string dataset_fingerprint;
  std::string model_path;
  std::string dataset_path;
  // Built on first request from the (labeled) reference dataset.
  mutable std::once_flag card_once;
  mutable std::shared_ptr<const nlohmann::json> card;
  mutable std::shared_ptr<const std::string> card_html;
};

struct ServiceOptions {
  std::ptrdiff_t max_jobs = 4;  // concurrent LIME / counterfactual jobs, 1..1024
  std::optional<std::filesystem::path> card_template;
  std::size_t card_importance_samples = 200;
  std::optional<std::string> card_timestamp;  // fixed timestamp for reproducible cards
};

struct HttpReply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

class RiskService {
 public:
  explicit RiskService(ServiceOptions options = {});

  // Loads a model and labeled-or-unlabeled reference cohort; returns fingerprints.
  nlohmann::json load(const std::filesystem::path& model_path,
                      const std::filesystem::path& dataset_path);
  void install(std::shared_ptr<const RandomForest> model, std::shared_ptr<const Dataset> reference);

  std::shared_ptr<const ServiceSnapshot> snapshot() const;

  // Transport-independent request handling; the HTTP server is a thin shim.
  HttpReply handle(std::string_view method, std::string_view path, std::string_view body);

 private:
  nlohmann::json route(std::string_view method, std::string_view path, const nlohmann::json& body,
                       const ServiceSnapshot& snap, HttpReply& reply);
  std::shared_ptr<const ServiceSnapshot> make_snapshot(std::shared_ptr<const RandomForest> model,
                                                       std::shared_ptr<const Dataset> reference,
                                                       std::string model_path,
                                                       std::string dataset_path) const;

  ServiceOptions options_;
  mutable std::mutex mutex_;
  std::shared_ptr<const ServiceSnapshot> current_;
  std::counting_semaphore<1024> jobs_;
};

// HTTP shim over RiskService::handle.
class HttpServer {
 public:
  explicit HttpServer(RiskService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;
  // Port 0 picks a free port. Returns the bound port; throws kIo on failure.
  int bind(const std::string& host, int port);
  void run();  // blocks until stop()
  void wait_until_ready() const;
  void stop();

 private:
  std::unique_ptr<httplib::Server> server_;
};

// Blocks serving `service` on host:port until the process is stopped.
void serve_http(RiskService& service, const std::string& host, int port);

}  // namespace riskexplain
