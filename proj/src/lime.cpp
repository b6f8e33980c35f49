#include "riskexplain/lime.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include <Eigen/Dense>

#include "riskexplain/error.hpp"

namespace riskexplain {

namespace {

std::string fixed(double v, int precision) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

}  // namespace

LimeBackground::LimeBackground(const Dataset& training) : schema_(training.schema_ptr()) {
  if (training.empty()) {
    throw Error(ErrorCode::kPrecondition, "LIME background needs at least one training record");
  }
  const auto& schema = *schema_;
  quartiles_.resize(schema.size());
  pools_.resize(schema.size());
  for (std::size_t f = 0; f < schema.size(); ++f) {
    auto values = observed_values(training, f);
    if (values.empty()) {
      const auto& spec = schema.feature(f);
      values.push_back((spec.min + spec.max) / 2.0);
    }
    pools_[f] = values;
    std::sort(values.begin(), values.end());
    quartiles_[f] = {quantile_sorted(values, 0.25), quantile_sorted(values, 0.5),
                     quantile_sorted(values, 0.75)};
  }
}

int LimeBackground::unit_of(std::size_t feature, double value) const {
  const auto& spec = schema_->feature(feature);
  if (spec.kind != FeatureKind::kNumerical) return static_cast<int>(value);
  const auto& q = quartiles_[feature];
  if (value <= q[0]) return 0;
  if (value <= q[1]) return 1;
  if (value <= q[2]) return 2;
  return 3;
}

std::string lime_condition(const LimeBackground& background, std::size_t feature,
                           const Value& value, double filled) {
  const auto& spec = background.schema().feature(feature);
  const double v = value.value_or(filled);
  if (spec.kind != FeatureKind::kNumerical) return spec.name + " = " + display_value(spec, v);
  const auto& q = background.quartiles(feature);
  const int p = spec.precision;
  switch (background.unit_of(feature, v)) {
    case 0:
      return spec.name + " <= " + fixed(q[0], p);
    case 1:
      return fixed(q[0], p) + " < " + spec.name + " <= " + fixed(q[1], p);
    case 2:
      return fixed(q[1], p) + " < " + spec.name + " <= " + fixed(q[2], p);
    default:
      return spec.name + " > " + fixed(q[2], p);
  }
}

Attribution explain_lime(const RandomForest& model, const PatientRecord& record,
                         std::string_view outcome, const LimeConfig& config) {
  const auto& schema = model.schema();
  validate_record(schema, record);
  const std::size_t o = schema.outcome_index(outcome);
  if (config.n_samples < 100) {
    throw Error(ErrorCode::kValidation, "n_samples must be at least 100", "n_samples");
  }
  if (config.top_k < 1) throw Error(ErrorCode::kValidation, "top_k must be at least 1", "top_k");
  if (!(config.ridge_lambda >= 0.0)) {
    throw Error(ErrorCode::kValidation, "ridge_lambda must be non-negative", "ridge_lambda");
  }
  if (!config.background) {
    throw Error(ErrorCode::kPrecondition, "LIME needs a training background", "background");
  }
  const auto& bg = *config.background;
  if (!(bg.schema() == schema)) {
    throw Error(ErrorCode::kSchemaMismatch, "LIME background schema differs from the model's");
  }

  const std::size_t n_features = schema.size();
  const std::size_t n = config.n_samples;
  const double width =
      config.kernel_width > 0.0 ? config.kernel_width : 0.75 * std::sqrt(static_cast<double>(n_features));

  std::vector<int> own_unit(n_features);
  for (std::size_t f = 0; f < n_features; ++f) {
    own_unit[f] = bg.unit_of(f, record.values[f].value_or(model.imputation()[f]));
  }

  // Row 0 is the record itself; the rest resample every feature from its pool.
  std::mt19937_64 rng(mix_seed(config.seed, 0));
  std::vector<PatientRecord> samples(n, record);
  Eigen::MatrixXd z = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(n),
                                            static_cast<Eigen::Index>(n_features));
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t f = 0; f < n_features; ++f) {
      const auto& pool = bg.pool(f);
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      const double v = pool[pick(rng)];
      samples[i].values[f] = v;
      z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) =
          bg.unit_of(f, v) == own_unit[f] ? 1.0 : 0.0;
    }
  }

  std::set<std::vector<double>> distinct;
  for (std::size_t i = 0; i < n && distinct.size() < 2; ++i) {
    const auto row = z.row(static_cast<Eigen::Index>(i));
    distinct.insert(std::vector<double>(row.begin(), row.end()));
  }
  if (distinct.size() < 2) {
    throw Error(ErrorCode::kPrecondition,
                "perturbations produced fewer than 2 distinct samples", "n_samples");
  }

  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  Eigen::VectorXd w(static_cast<Eigen::Index>(n));
  for_each_index(config.exec, n, [&](std::size_t i) {
    const auto x = model.encode(samples[i]);
    y(static_cast<Eigen::Index>(i)) = model.predict_encoded(x, o);
  });
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const double d = (static_cast<double>(n_features) - z.row(row).sum()) /
                     static_cast<double>(n_features);
    w(row) = std::exp(-(d * d) / (width * width));
  }

  // Weighted ridge with an unpenalised intercept: centre on weighted means.
  const double w_sum = w.sum();
  const Eigen::RowVectorXd z_mean = (w.transpose() * z) / w_sum;
  const double y_mean = w.dot(y) / w_sum;
  const Eigen::MatrixXd zc = z.rowwise() - z_mean;
  const Eigen::VectorXd yc = y.array() - y_mean;
  Eigen::MatrixXd gram = zc.transpose() * w.asDiagonal() * zc;
  gram.diagonal().array() += config.ridge_lambda;
  const Eigen::VectorXd rhs = zc.transpose() * (w.asDiagonal() * yc);
  const Eigen::VectorXd beta = gram.ldlt().solve(rhs);
  const double intercept = y_mean - z_mean.dot(beta);

  const Eigen::VectorXd residual = yc - zc * beta;
  const double ss_res = w.dot(residual.cwiseProduct(residual));
  const double ss_tot = w.dot(yc.cwiseProduct(yc));
  const double r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;

  Attribution a;
  a.method = Method::kLime;
  a.outcome = schema.outcomes()[o];
  a.base_value = intercept;
  a.prediction = y(0);
  a.surrogate_r2 = r2;
  for (std::size_t f = 0; f < n_features; ++f) {
    a.contributions.push_back({schema.feature(f).name,
                               lime_condition(bg, f, record.values[f], model.imputation()[f]),
                               beta(static_cast<Eigen::Index>(f))});
  }
  sort_contributions(a.contributions);
  if (a.contributions.size() > config.top_k) a.contributions.resize(config.top_k);
  return a;
}

}  // namespace riskexplain
