#include "riskexplain/model_card.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "riskexplain/error.hpp"
#include "riskexplain/fingerprint.hpp"
#include "riskexplain/model_io.hpp"

namespace riskexplain {

namespace {

std::vector<std::string> string_list(const nlohmann::json& doc, const char* key) {
  std::vector<std::string> out;
  if (!doc.contains(key)) return out;
  const auto& v = doc.at(key);
  if (!v.is_array()) throw Error(ErrorCode::kParse, std::string(key) + " must be a list", key);
  for (const auto& item : v) {
    if (!item.is_string()) throw Error(ErrorCode::kParse, std::string(key) + " entries must be text", key);
    out.push_back(item.get<std::string>());
  }
  return out;
}

std::string text_field(const nlohmann::json& doc, const char* key, std::string fallback = {}) {
  if (!doc.contains(key)) return fallback;
  if (!doc.at(key).is_string()) throw Error(ErrorCode::kParse, std::string(key) + " must be text", key);
  return doc.at(key).get<std::string>();
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string fixed(double v, int precision) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

std::string escape_html(std::string_view text) {
  std::string out;
  for (const char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

CohortColumn cohort_column(const Dataset& data, const std::string& split, const CardConfig& config) {
  const auto& schema = data.schema();
  CohortColumn c;
  c.split = split;
  c.encounters = data.size();
  std::set<std::string> ids;
  for (const auto& r : data.records()) ids.insert(r.id);
  c.patients = ids.size();

  const std::size_t age = schema.feature_index(config.age_feature);
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : data.records()) {
    if (r.values[age]) {
      sum += *r.values[age];
      ++n;
    }
  }
  if (n > 0) {
    c.age_mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto& r : data.records()) {
      if (r.values[age]) ss += (*r.values[age] - c.age_mean) * (*r.values[age] - c.age_mean);
    }
    c.age_sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  }

  const std::size_t sex = schema.feature_index(config.sex_feature);
  const auto& spec = schema.feature(sex);
  std::optional<double> female;
  if (spec.kind == FeatureKind::kCategorical) {
    if (const auto l = spec.level_index(config.female_label)) female = static_cast<double>(*l);
  } else if (spec.kind == FeatureKind::kBinary) {
    for (std::size_t l = 0; l < spec.labels.size(); ++l) {
      if (spec.labels[l] == config.female_label) female = static_cast<double>(l);
    }
  }
  if (!female) {
    throw Error(ErrorCode::kValidation, "sex feature has no level '" + config.female_label + "'",
                "sex_feature");
  }
  for (const auto& r : data.records()) {
    if (!r.values[sex]) continue;
    if (*r.values[sex] == *female) {
      ++c.female;
    } else {
      ++c.male;
    }
  }
  if (!data.empty()) {
    c.male_pct = 100.0 * static_cast<double>(c.male) / static_cast<double>(data.size());
    c.female_pct = 100.0 * static_cast<double>(c.female) / static_cast<double>(data.size());
  }
  return c;
}

double prevalence(const Dataset& data, std::size_t outcome) {
  std::size_t positives = 0;
  for (std::size_t i = 0; i < data.size(); ++i) positives += data.label(i, outcome);
  return static_cast<double>(positives) / static_cast<double>(data.size());
}

nlohmann::json ranking_json(const RankedImportance& r) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& [name, value] : r.ranking) features.push_back({{"feature", name}, {"importance", value}});
  return {{"group", r.group}, {"n_records", r.n_records}, {"ranking", features}};
}

}  // namespace

CardText card_text_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::kParse, "card text must be an object");
  CardText t;
  t.title = text_field(doc, "title", t.title);
  t.overview = text_field(doc, "overview");
  t.data_source = text_field(doc, "data_source");
  t.references = string_list(doc, "references");
  t.intended_users = string_list(doc, "intended_users");
  t.use_cases = string_list(doc, "use_cases");
  t.caveats = string_list(doc, "caveats");
  if (doc.contains("reported_cohort")) t.reported_cohort = text_field(doc, "reported_cohort");
  return t;
}

CardText load_card_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string(), "card_template");
  try {
    return card_text_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("card template: ") + e.what(), "card_template");
  }
}

std::filesystem::path demo_card_template_path() {
  return std::filesystem::path(RISKEXPLAIN_DATA_DIR) / "demo_card_template.json";
}

ModelCard build_model_card(const RandomForest& model, const Dataset& dev, const Dataset& val,
                           const CardConfig& config) {
  for (const Dataset* d : {&dev, &val}) {
    if (!(d->schema() == model.schema())) {
      throw Error(ErrorCode::kSchemaMismatch, "card dataset schema differs from the model's");
    }
    if (!d->has_labels()) throw Error(ErrorCode::kPrecondition, "card datasets must be labeled");
    if (d->empty()) throw Error(ErrorCode::kPrecondition, "card datasets must be non-empty");
  }

  ModelCard card;
  card.text = config.text;
  card.cohort = {cohort_column(dev, "development", config), cohort_column(val, "validation", config)};

  const auto aurocs = evaluate_auroc(model, val, config.importance.exec);
  for (std::size_t k = 0; k < model.n_outputs(); ++k) {
    card.outcomes.push_back({model.schema().outcomes()[k], prevalence(dev, k), prevalence(val, k),
                             aurocs[k].auroc, aurocs[k].roc});
  }

  auto importance = importance_report(model, val, config.subgroups, config.per_outcome_importance,
                                      config.importance);
  card.overall_importance = std::move(importance.overall);
  card.outcome_importance = std::move(importance.per_outcome);
  for (auto& s : importance.subgroups) {
    card.subgroups.push_back({s.name, {std::move(s.groups[0]), std::move(s.groups[1])}});
  }

  card.model_fingerprint = model_fingerprint(model);
  card.dev_fingerprint = dataset_fingerprint(dev);
  card.val_fingerprint = dataset_fingerprint(val);
  card.generated_at = config.timestamp ? *config.timestamp : utc_now();
  return card;
}

nlohmann::json card_to_json(const ModelCard& card) {
  nlohmann::json text = {{"title", card.text.title},
                         {"overview", card.text.overview},
                         {"data_source", card.text.data_source},
                         {"references", card.text.references},
                         {"intended_users", card.text.intended_users},
                         {"use_cases", card.text.use_cases},
                         {"caveats", card.text.caveats}};
  if (card.text.reported_cohort) text["reported_cohort"] = *card.text.reported_cohort;

  nlohmann::json cohort = nlohmann::json::array();
  for (const auto& c : card.cohort) {
    cohort.push_back({{"split", c.split},
                      {"patients", c.patients},
                      {"encounters", c.encounters},
                      {"age_mean", c.age_mean},
                      {"age_sd", c.age_sd},
                      {"male", c.male},
                      {"female", c.female},
                      {"male_pct", c.male_pct},
                      {"female_pct", c.female_pct}});
  }
  nlohmann::json outcomes = nlohmann::json::array();
  for (const auto& o : card.outcomes) {
    nlohmann::json roc = nlohmann::json::array();
    for (const auto& p : o.roc) roc.push_back({p.fpr, p.tpr});
    outcomes.push_back({{"outcome", o.outcome},
                        {"prevalence_dev", o.prevalence_dev},
                        {"prevalence_val", o.prevalence_val},
                        {"auroc", o.auroc ? nlohmann::json(*o.auroc) : nlohmann::json(nullptr)},
                        {"roc", roc}});
  }
  nlohmann::json per_outcome = nlohmann::json::array();
  for (const auto& r : card.outcome_importance) per_outcome.push_back(ranking_json(r));
  nlohmann::json subgroups = nlohmann::json::array();
  for (const auto& s : card.subgroups) {
    subgroups.push_back({{"name", s.name},
                         {"groups", {ranking_json(s.groups[0]), ranking_json(s.groups[1])}}});
  }
  return {{"text", text},
          {"cohort", cohort},
          {"outcomes", outcomes},
          {"importance", {{"overall", ranking_json(card.overall_importance)},
                          {"per_outcome", per_outcome},
                          {"subgroups", subgroups}}},
          {"provenance", {{"model_fingerprint", card.model_fingerprint},
                          {"dev_fingerprint", card.dev_fingerprint},
                          {"val_fingerprint", card.val_fingerprint},
                          {"generated_at", card.generated_at}}}};
}

std::string render_markdown(const ModelCard& card) {
  std::ostringstream md;
  const auto& t = card.text;
  md << "# " << t.title << "\n\n";
  md << "## Overview\n\n" << t.overview << "\n\n";
  md << "## Source of Data\n\n" << t.data_source << "\n\n";
  auto bullets = [&](const char* heading, const std::vector<std::string>& items) {
    if (items.empty()) return;
    md << "## " << heading << "\n\n";
    for (const auto& item : items) md << "- " << item << "\n";
    md << "\n";
  };
  bullets("References", t.references);
  bullets("Intended Users", t.intended_users);
  bullets("Use Cases", t.use_cases);
  bullets("Caveats", t.caveats);

  md << "## Outcome Prevalence\n\n| Outcome | Development | Validation | AUROC |\n|---|---|---|---|\n";
  for (const auto& o : card.outcomes) {
    md << "| " << o.outcome << " | " << fixed(100.0 * o.prevalence_dev, 1) << "% | "
       << fixed(100.0 * o.prevalence_val, 1) << "% | " << (o.auroc ? fixed(*o.auroc, 3) : "n/a")
       << " |\n";
  }
  md << "\n## Training Data Cohort\n\n";
  md << "| | " << card.cohort[0].split << " | " << card.cohort[1].split << " |\n|---|---|---|\n";
  auto row = [&](const char* label, auto fn) {
    md << "| " << label << " | " << fn(card.cohort[0]) << " | " << fn(card.cohort[1]) << " |\n";
  };
  row("Patients, N", [](const CohortColumn& c) { return std::to_string(c.patients); });
  row("Encounters, N", [](const CohortColumn& c) { return std::to_string(c.encounters); });
  row("Age, years, mean (SD)",
      [](const CohortColumn& c) { return fixed(c.age_mean, 0) + " (" + fixed(c.age_sd, 0) + ")"; });
  row("Male, N (%)",
      [](const CohortColumn& c) { return std::to_string(c.male) + " (" + fixed(c.male_pct, 0) + ")"; });
  row("Female, N (%)", [](const CohortColumn& c) {
    return std::to_string(c.female) + " (" + fixed(c.female_pct, 0) + ")";
  });
  if (t.reported_cohort) md << "\n" << *t.reported_cohort << "\n";

  auto ranking = [&](const RankedImportance& r, std::size_t top) {
    for (std::size_t i = 0; i < r.ranking.size() && i < top; ++i) {
      md << i + 1 << ". " << r.ranking[i].first << " (" << fixed(r.ranking[i].second, 4) << ")\n";
    }
    md << "\n";
  };
  md << "\n## Global Feature Importance\n\n";
  ranking(card.overall_importance, 10);
  for (const auto& s : card.subgroups) {
    md << "### By " << s.name << "\n\n";
    for (const auto& g : s.groups) {
      md << "**" << g.group << "** (n = " << g.n_records << ")\n\n";
      ranking(g, 5);
    }
  }
  md << "## Provenance\n\n- model: `" << card.model_fingerprint << "`\n- development data: `"
     << card.dev_fingerprint << "`\n- validation data: `" << card.val_fingerprint
     << "`\n- generated: " << card.generated_at << "\n";
  return md.str();
}

std::string render_html(const ModelCard& card) {
  const auto& t = card.text;
  std::ostringstream h;
  h << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>" << escape_html(t.title)
    << "</title>\n<style>body{font-family:sans-serif;max-width:960px;margin:auto}"
       "table{border-collapse:collapse}td,th{border:1px solid #ccc;padding:4px 8px}"
       ".bar{fill:#4477aa}</style></head><body>\n";
  h << "<h1>" << escape_html(t.title) << "</h1>\n";
  h << "<h2>Overview</h2><p>" << escape_html(t.overview) << "</p>\n";
  h << "<h2>Source of Data</h2><p>" << escape_html(t.data_source) << "</p>\n";
  auto list = [&](const char* heading, const std::vector<std::string>& items) {
    if (items.empty()) return;
    h << "<h2>" << heading << "</h2><ul>";
    for (const auto& item : items) h << "<li>" << escape_html(item) << "</li>";
    h << "</ul>\n";
  };
  list("References", t.references);
  list("Intended Users", t.intended_users);
  list("Use Cases", t.use_cases);
  list("Caveats", t.caveats);

  h << "<h2>Outcome Prevalence</h2><table><tr><th>Outcome</th><th>Development</th>"
       "<th>Validation</th><th>AUROC</th></tr>";
  for (const auto& o : card.outcomes) {
    h << "<tr><td>" << escape_html(o.outcome) << "</td><td>" << fixed(100.0 * o.prevalence_dev, 1)
      << "%</td><td>" << fixed(100.0 * o.prevalence_val, 1) << "%</td><td>"
      << (o.auroc ? fixed(*o.auroc, 3) : "n/a") << "</td></tr>";
  }
  h << "</table>\n<h2>Training Data Cohort</h2><table><tr><th></th>";
  for (const auto& c : card.cohort) h << "<th>" << escape_html(c.split) << "</th>";
  h << "</tr><tr><td>Patients, N</td>";
  for (const auto& c : card.cohort) h << "<td>" << c.patients << "</td>";
  h << "</tr><tr><td>Encounters, N</td>";
  for (const auto& c : card.cohort) h << "<td>" << c.encounters << "</td>";
  h << "</tr><tr><td>Age, years, mean (SD)</td>";
  for (const auto& c : card.cohort) h << "<td>" << fixed(c.age_mean, 0) << " (" << fixed(c.age_sd, 0) << ")</td>";
  h << "</tr><tr><td>Male, N (%)</td>";
  for (const auto& c : card.cohort) h << "<td>" << c.male << " (" << fixed(c.male_pct, 0) << ")</td>";
  h << "</tr><tr><td>Female, N (%)</td>";
  for (const auto& c : card.cohort) h << "<td>" << c.female << " (" << fixed(c.female_pct, 0) << ")</td>";
  h << "</tr></table>\n";
  if (t.reported_cohort) h << "<p>" << escape_html(*t.reported_cohort) << "</p>\n";

  h << "<h2>AUROC curve</h2>\n";
  for (const auto& o : card.outcomes) {
    h << "<figure><svg width=\"200\" height=\"200\" viewBox=\"0 0 1 1\" "
         "preserveAspectRatio=\"none\"><g transform=\"translate(0,1) scale(1,-1)\">"
         "<line x1=\"0\" y1=\"0\" x2=\"1\" y2=\"1\" stroke=\"#ccc\" stroke-width=\"0.01\"/>"
         "<polyline fill=\"none\" stroke=\"#cc3311\" stroke-width=\"0.015\" points=\"";
    for (const auto& p : o.roc) h << fixed(p.fpr, 4) << "," << fixed(p.tpr, 4) << " ";
    h << "\"/></g></svg><figcaption>" << escape_html(o.outcome) << " (AUROC "
      << (o.auroc ? fixed(*o.auroc, 3) : "n/a") << ")</figcaption></figure>\n";
  }

  auto bars = [&](const RankedImportance& r, std::size_t top) {
    const double peak = r.ranking.empty() || r.ranking.front().second <= 0.0 ? 1.0 : r.ranking.front().second;
    const std::size_t n = std::min(top, r.ranking.size());
    h << "<svg width=\"520\" height=\"" << 20 * n << "\">";
    for (std::size_t i = 0; i < n; ++i) {
      const auto& [name, value] = r.ranking[i];
      h << "<text x=\"0\" y=\"" << 20 * i + 14 << "\" font-size=\"12\">" << escape_html(name)
        << "</text><rect class=\"bar\" x=\"180\" y=\"" << 20 * i + 3 << "\" height=\"14\" width=\""
        << fixed(300.0 * std::max(value, 0.0) / peak, 1) << "\"/>";
    }
    h << "</svg>\n";
  };
  h << "<h2>Global Feature Importance</h2>\n";
  bars(card.overall_importance, 15);
  for (const auto& s : card.subgroups) {
    h << "<h3>By " << escape_html(s.name) << "</h3>\n";
    for (const auto& g : s.groups) {
      h << "<h4>" << escape_html(g.group) << " (n = " << g.n_records << ")</h4>\n";
      bars(g, 10);
    }
  }
  h << "<h2>Provenance</h2><ul><li>model: <code>" << card.model_fingerprint
    << "</code></li><li>development data: <code>" << card.dev_fingerprint
    << "</code></li><li>validation data: <code>" << card.val_fingerprint
    << "</code></li><li>generated: " << escape_html(card.generated_at) << "</li></ul>\n";
  std::string data = card_to_json(card).dump();
  for (std::size_t pos = 0; (pos = data.find("</", pos)) != std::string::npos; pos += 3) {
    data.replace(pos, 2, "<\\/");
  }
  h << "<script type=\"application/json\" id=\"card-data\">" << data << "</script>\n";
  h << "</body></html>\n";
  return h.str();
}

}  // namespace riskexplain
