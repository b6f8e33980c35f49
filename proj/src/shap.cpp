#include "riskexplain/shap.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "riskexplain/error.hpp"

namespace riskexplain {

std::string_view to_string(Method method) { return method == Method::kLime ? "LIME" : "SHAP"; }

const Contribution* Attribution::find(std::string_view feature) const {
  for (const auto& c : contributions) {
    if (c.feature == feature) return &c;
  }
  return nullptr;
}

void sort_contributions(std::vector<Contribution>& contributions) {
  std::stable_sort(contributions.begin(), contributions.end(),
                   [](const Contribution& a, const Contribution& b) {
                     return std::abs(a.value) > std::abs(b.value);
                   });
}

namespace {

// Path-dependent expectation for all outputs, accumulated into `out`.
void accumulate_expectation(const DecisionTree& tree, std::size_t node, std::span<const double> x,
                            std::span<const std::uint8_t> known, double weight,
                            std::span<double> out) {
  const auto& n = tree.node(node);
  if (n.is_leaf()) {
    const auto v = tree.values(node);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += weight * v[k];
    return;
  }
  const auto column = static_cast<std::size_t>(n.column);
  const auto left = static_cast<std::size_t>(n.left);
  const auto right = static_cast<std::size_t>(n.right);
  if (known[column]) {
    accumulate_expectation(tree, x[column] <= n.threshold ? left : right, x, known, weight, out);
    return;
  }
  accumulate_expectation(tree, left, x, known, weight * tree.node(left).cover / n.cover, out);
  accumulate_expectation(tree, right, x, known, weight * tree.node(right).cover / n.cover, out);
}

// One element of the unique decision path: the fraction of "feature absent"
// (zero) and "feature present" (one) paths flowing through it, and the
// permutation weight of subsets of each size.
struct PathElement {
  int column = -1;
  double zero_fraction = 0.0;
  double one_fraction = 0.0;
  double pweight = 0.0;
};

void extend_path(PathElement* path, std::size_t depth, double zero_fraction, double one_fraction,
                 int column) {
  path[depth] = {column, zero_fraction, one_fraction, depth == 0 ? 1.0 : 0.0};
  const double d1 = static_cast<double>(depth + 1);
  for (std::size_t i = depth; i-- > 0;) {
    path[i + 1].pweight += one_fraction * path[i].pweight * static_cast<double>(i + 1) / d1;
    path[i].pweight = zero_fraction * path[i].pweight * static_cast<double>(depth - i) / d1;
  }
}

void unwind_path(PathElement* path, std::size_t depth, std::size_t index) {
  const double one = path[index].one_fraction;
  const double zero = path[index].zero_fraction;
  const double d1 = static_cast<double>(depth + 1);
  double next_one_portion = path[depth].pweight;
  for (std::size_t i = depth; i-- > 0;) {
    if (one != 0.0) {
      const double tmp = path[i].pweight;
      path[i].pweight = next_one_portion * d1 / (static_cast<double>(i + 1) * one);
      next_one_portion = tmp - path[i].pweight * zero * static_cast<double>(depth - i) / d1;
    } else {
      path[i].pweight = path[i].pweight * d1 / (zero * static_cast<double>(depth - i));
    }
  }
  for (std::size_t i = index; i < depth; ++i) {
    path[i].column = path[i + 1].column;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
}

double unwound_path_sum(const PathElement* path, std::size_t depth, std::size_t index) {
  const double one = path[index].one_fraction;
  const double zero = path[index].zero_fraction;
  const double d1 = static_cast<double>(depth + 1);
  double next_one_portion = path[depth].pweight;
  double total = 0.0;
  for (std::size_t i = depth; i-- > 0;) {
    if (one != 0.0) {
      const double tmp = next_one_portion * d1 / (static_cast<double>(i + 1) * one);
      total += tmp;
      next_one_portion = path[i].pweight - tmp * zero * static_cast<double>(depth - i) / d1;
    } else if (zero != 0.0) {
      total += path[i].pweight / zero / (static_cast<double>(depth - i) / d1);
    }
  }
  return total;
}

class TreeShapWalker {
 public:
  // `max_depth` bounds every tree the walker will see; the path buffer is reused.
  TreeShapWalker(std::size_t max_depth, std::span<const double> x, std::size_t width,
                 std::span<double> phi)
      : x_(x), width_(width), phi_(phi) {
    const std::size_t d = max_depth + 2;
    path_.resize((d * (d + 1)) / 2 + 1);
  }

  void run(const DecisionTree& tree) {
    tree_ = &tree;
    recurse(0, 0, path_.data(), 1.0, 1.0, -1);
  }

 private:
  void recurse(std::size_t node, std::size_t depth, PathElement* parent_path, double zero_fraction,
               double one_fraction, int parent_column) {
    PathElement* path = parent_path + depth + 1;
    std::copy(parent_path, parent_path + depth + 1, path);
    extend_path(path, depth, zero_fraction, one_fraction, parent_column);

    const auto& n = tree_->node(node);
    if (n.is_leaf()) {
      const auto values = tree_->values(node);
      for (std::size_t i = 1; i <= depth; ++i) {
        const double w = unwound_path_sum(path, depth, i);
        const double scale = w * (path[i].one_fraction - path[i].zero_fraction);
        const auto column = static_cast<std::size_t>(path[i].column);
        for (std::size_t k = 0; k < values.size(); ++k) phi_[k * width_ + column] += scale * values[k];
      }
      return;
    }

    const auto column = static_cast<std::size_t>(n.column);
    const auto left = static_cast<std::size_t>(n.left);
    const auto right = static_cast<std::size_t>(n.right);
    const std::size_t hot = x_[column] <= n.threshold ? left : right;
    const std::size_t cold = hot == left ? right : left;
    const double hot_zero = tree_->node(hot).cover / n.cover;
    const double cold_zero = tree_->node(cold).cover / n.cover;
    double incoming_zero = 1.0;
    double incoming_one = 1.0;

    // A column already on the path is unwound and re-entered here.
    std::size_t index = 0;
    for (; index <= depth; ++index) {
      if (path[index].column == n.column) break;
    }
    if (index != depth + 1) {
      incoming_zero = path[index].zero_fraction;
      incoming_one = path[index].one_fraction;
      unwind_path(path, depth, index);
      depth -= 1;
    }

    recurse(hot, depth + 1, path, hot_zero * incoming_zero, incoming_one, n.column);
    recurse(cold, depth + 1, path, cold_zero * incoming_zero, 0.0, n.column);
  }

  const DecisionTree* tree_ = nullptr;
  std::span<const double> x_;
  std::size_t width_;
  std::span<double> phi_;
  std::vector<PathElement> path_;
};

std::vector<double> expected_values(const RandomForest& model, std::span<const double> x) {
  std::vector<double> base(model.n_outputs(), 0.0);
  std::vector<std::uint8_t> none(model.encoder().width(), 0);
  for (const auto& tree : model.trees()) accumulate_expectation(tree, 0, x, none, 1.0, base);
  for (auto& b : base) b /= static_cast<double>(model.trees().size());
  return base;
}

Attribution to_attribution(const RandomForest& model, const PatientRecord& record,
                           std::size_t outcome, const EncodedShap& shap, std::span<const double> x) {
  const auto& schema = model.schema();
  std::vector<double> per_column(shap.width);
  for (std::size_t c = 0; c < shap.width; ++c) per_column[c] = shap.at(outcome, c);
  const auto per_feature = model.encoder().aggregate(per_column);

  Attribution a;
  a.method = Method::kShap;
  a.outcome = schema.outcomes()[outcome];
  a.base_value = shap.base[outcome];
  a.prediction = model.predict_encoded(x, outcome);
  for (std::size_t f = 0; f < schema.size(); ++f) {
    const auto& spec = schema.feature(f);
    std::string condition = spec.name + " = " + display_value(spec, record.values[f]);
    a.contributions.push_back({spec.name, std::move(condition), per_feature[f]});
  }
  sort_contributions(a.contributions);
  return a;
}

void check_additivity([[maybe_unused]] const Attribution& a) {
#ifdef RISKEXPLAIN_CHECK_INVARIANTS
  double total = a.base_value;
  for (const auto& c : a.contributions) total += c.value;
  if (std::abs(total - a.prediction) > 1e-9) {
    throw Error(ErrorCode::kInternal, "SHAP additivity violated for outcome '" + a.outcome + "'");
  }
#endif
}

}  // namespace

double path_dependent_value(const DecisionTree& tree, std::span<const double> x,
                            std::span<const std::uint8_t> known, std::size_t outcome) {
  std::vector<double> out(tree.n_outputs(), 0.0);
  accumulate_expectation(tree, 0, x, known, 1.0, out);
  return out[outcome];
}

EncodedShap tree_shap(const RandomForest& model, std::span<const double> x) {
  EncodedShap result;
  result.width = model.encoder().width();
  result.phi.assign(model.n_outputs() * result.width, 0.0);
  TreeShapWalker walker(model.max_tree_depth(), x, result.width, result.phi);
  for (const auto& tree : model.trees()) walker.run(tree);
  for (auto& v : result.phi) v /= static_cast<double>(model.trees().size());
  result.base = expected_values(model, x);
  return result;
}

EncodedShap exact_shap(const RandomForest& model, std::span<const double> x,
                       std::size_t max_features) {
  const std::size_t d = model.encoder().width();
  if (max_features > kMaxExactFeatures) {
    throw Error(ErrorCode::kGuard, "max_exact_features may not exceed 20", "max_exact_features");
  }
  if (d > max_features) {
    throw Error(ErrorCode::kGuard,
                "exact SHAP over " + std::to_string(d) + " encoded columns exceeds the guard of " +
                    std::to_string(max_features),
                "max_exact_features");
  }
  const std::size_t m = model.n_outputs();
  const std::size_t subsets = std::size_t{1} << d;

  // v(S) for every coalition S, all outputs.
  std::vector<double> game(subsets * m, 0.0);
  std::vector<std::uint8_t> known(d);
  for (std::size_t s = 0; s < subsets; ++s) {
    for (std::size_t j = 0; j < d; ++j) known[j] = (s >> j) & 1U;
    std::span<double> out(game.data() + s * m, m);
    for (const auto& tree : model.trees()) accumulate_expectation(tree, 0, x, known, 1.0, out);
    for (auto& v : out) v /= static_cast<double>(model.trees().size());
  }

  // |S|! (d - |S| - 1)! / d! = 1 / (d * C(d - 1, |S|))
  std::vector<double> weight(d, 0.0);
  for (std::size_t s = 0; s < d; ++s) {
    double binom = 1.0;
    for (std::size_t i = 1; i <= s; ++i) {
      binom = binom * static_cast<double>(d - 1 - s + i) / static_cast<double>(i);
    }
    weight[s] = 1.0 / (static_cast<double>(d) * binom);
  }

  EncodedShap result;
  result.width = d;
  result.phi.assign(m * d, 0.0);
  for (std::size_t s = 0; s < subsets; ++s) {
    const auto size = static_cast<std::size_t>(std::popcount(s));
    for (std::size_t j = 0; j < d; ++j) {
      if ((s >> j) & 1U) continue;
      const std::size_t with = s | (std::size_t{1} << j);
      for (std::size_t k = 0; k < m; ++k) {
        result.phi[k * d + j] += weight[size] * (game[with * m + k] - game[s * m + k]);
      }
    }
  }
  result.base.assign(game.begin(), game.begin() + static_cast<std::ptrdiff_t>(m));
  return result;
}

Attribution explain_shap_tree(const RandomForest& model, const PatientRecord& record,
                              std::string_view outcome) {
  validate_record(model.schema(), record);
  const std::size_t o = model.schema().outcome_index(outcome);
  const auto x = model.encode(record);
  auto a = to_attribution(model, record, o, tree_shap(model, x), x);
  check_additivity(a);
  return a;
}

Attribution explain_shap_exact(const RandomForest& model, const PatientRecord& record,
                               std::string_view outcome, const ShapConfig& config) {
  validate_record(model.schema(), record);
  const std::size_t o = model.schema().outcome_index(outcome);
  const auto x = model.encode(record);
  auto a = to_attribution(model, record, o, exact_shap(model, x, config.max_exact_features), x);
  check_additivity(a);
  return a;
}

Attribution explain_shap(const RandomForest& model, const PatientRecord& record,
                         std::string_view outcome, const ShapConfig& config) {
  return config.mode == ShapConfig::Mode::kExact ? explain_shap_exact(model, record, outcome, config)
                                                 : explain_shap_tree(model, record, outcome);
}

std::vector<std::vector<double>> shap_batch(const RandomForest& model,
                                            std::span<const PatientRecord> records,
                                            Execution exec) {
  for (const auto& r : records) validate_record(model.schema(), r);
  const std::size_t m = model.n_outputs();
  const std::size_t features = model.schema().size();
  std::vector<std::vector<double>> out(records.size());
  for_each_index(exec, records.size(), [&](std::size_t i) {
    const auto x = model.encode(records[i]);
    const auto shap = tree_shap(model, x);
    out[i].assign(m * features, 0.0);
    for (std::size_t k = 0; k < m; ++k) {
      for (std::size_t c = 0; c < shap.width; ++c) {
        out[i][k * features + model.encoder().feature_of(c)] += shap.at(k, c);
      }
    }
  });
  return out;
}

}  // namespace riskexplain
