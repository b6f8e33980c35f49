#include "riskexplain/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "riskexplain/error.hpp"
#include "riskexplain/fingerprint.hpp"

namespace riskexplain {

DecisionTree::DecisionTree(std::size_t n_outputs, std::vector<TreeNode> nodes,
                           std::vector<double> values)
    : n_outputs_(n_outputs), nodes_(std::move(nodes)), values_(std::move(values)) {
  if (values_.size() != nodes_.size() * n_outputs_) {
    throw Error(ErrorCode::kValidation, "tree values must hold n_outputs entries per node");
  }
}

DecisionTree DecisionTree::constant(std::vector<double> leaf_values, double cover) {
  const std::size_t m = leaf_values.size();
  TreeNode leaf;
  leaf.cover = cover;
  return DecisionTree(m, {leaf}, std::move(leaf_values));
}

std::size_t DecisionTree::leaf_index(std::span<const double> x) const {
  std::size_t i = 0;
  while (!nodes_[i].is_leaf()) {
    const auto& n = nodes_[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.column)] <= n.threshold ? n.left : n.right);
  }
  return i;
}

std::size_t DecisionTree::depth() const {
  if (nodes_.empty()) return 0;
  std::size_t best = 0;
  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
  while (!stack.empty()) {
    auto [i, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    if (!nodes_[i].is_leaf()) {
      stack.emplace_back(static_cast<std::size_t>(nodes_[i].left), d + 1);
      stack.emplace_back(static_cast<std::size_t>(nodes_[i].right), d + 1);
    }
  }
  return best;
}

void DecisionTree::validate(std::size_t width) const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kValidation, "invalid tree: " + what); };
  if (nodes_.empty()) fail("no nodes");
  std::vector<int> parents(nodes_.size(), 0);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    if (n.is_leaf()) {
      if (!(n.cover >= 1.0)) fail("leaf sample count below 1");
      for (double v : values(i)) {
        if (!(v >= 0.0 && v <= 1.0)) fail("leaf probability outside [0, 1]");
      }
      continue;
    }
    if (static_cast<std::size_t>(n.column) >= width) fail("split on an unknown column");
    for (auto child : {n.left, n.right}) {
      // children are stored after their parent, which rules out cycles
      if (child <= static_cast<std::int32_t>(i) || static_cast<std::size_t>(child) >= nodes_.size()) {
        fail("child index out of order");
      }
      ++parents[static_cast<std::size_t>(child)];
    }
    if (!std::isfinite(n.threshold)) fail("non-finite threshold");
  }
  if (parents[0] != 0) fail("root has a parent");
  for (std::size_t i = 1; i < parents.size(); ++i) {
    if (parents[i] != 1) fail("node without exactly one parent");
  }
}

RandomForest::RandomForest(SchemaPtr schema, std::vector<DecisionTree> trees,
                           std::vector<double> fill, std::vector<double> base_rates,
                           TrainingMetadata metadata)
    : schema_(std::move(schema)),
      encoder_(*schema_),
      trees_(std::move(trees)),
      fill_(std::move(fill)),
      base_rates_(std::move(base_rates)),
      metadata_(std::move(metadata)) {
  if (trees_.empty()) throw Error(ErrorCode::kValidation, "forest has no trees");
  if (fill_.size() != schema_->size()) {
    throw Error(ErrorCode::kValidation, "imputation vector must cover every feature");
  }
  for (const auto& tree : trees_) {
    if (tree.n_outputs() != n_outputs()) {
      throw Error(ErrorCode::kValidation, "tree output count differs from schema outcomes");
    }
    tree.validate(encoder_.width());
    max_depth_ = std::max(max_depth_, tree.depth());
  }
  if (!base_rates_.empty()) {
    if (base_rates_.size() != n_outputs()) throw Error(ErrorCode::kValidation, "base rate arity");
    for (double b : base_rates_) {
      if (!(b >= 0.0 && b <= 1.0)) throw Error(ErrorCode::kValidation, "base rate outside [0, 1]");
    }
  }
}

std::vector<double> RandomForest::encode(const PatientRecord& record) const {
  std::vector<double> x(encoder_.width());
  encoder_.encode(record, fill_, x);
  return x;
}

void RandomForest::predict_encoded(std::span<const double> x, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  for (const auto& tree : trees_) {
    const auto leaf = tree.values(tree.leaf_index(x));
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += leaf[k];
  }
  const double n = static_cast<double>(trees_.size());
  for (auto& v : out) v /= n;
}

double RandomForest::predict_encoded(std::span<const double> x, std::size_t outcome) const {
  double sum = 0.0;
  for (const auto& tree : trees_) sum += tree.values(tree.leaf_index(x))[outcome];
  return sum / static_cast<double>(trees_.size());
}

RiskPrediction RandomForest::predict_proba(const PatientRecord& record) const {
  validate_record(*schema_, record);
  const auto x = encode(record);
  RiskPrediction p;
  p.probabilities.resize(n_outputs());
  predict_encoded(x, p.probabilities);
  return p;
}

std::vector<RiskPrediction> RandomForest::predict_batch(std::span<const PatientRecord> records,
                                                        Execution exec) const {
  for (const auto& r : records) validate_record(*schema_, r);
  std::vector<RiskPrediction> out(records.size());
  for_each_index(exec, records.size(), [&](std::size_t i) {
    const auto x = encode(records[i]);
    out[i].probabilities.resize(n_outputs());
    predict_encoded(x, out[i].probabilities);
  });
  return out;
}

bool RandomForest::uses_feature(std::size_t feature) const {
  const auto [first, last] = encoder_.columns_of(feature);
  for (const auto& tree : trees_) {
    for (const auto& n : tree.nodes()) {
      if (!n.is_leaf() && static_cast<std::size_t>(n.column) >= first &&
          static_cast<std::size_t>(n.column) < last) {
        return true;
      }
    }
  }
  return false;
}

std::vector<double> imputation_values(const Dataset& dataset) {
  const auto& schema = dataset.schema();
  std::vector<double> fill(schema.size(), 0.0);
  for (std::size_t f = 0; f < schema.size(); ++f) {
    const auto& spec = schema.feature(f);
    if (spec.kind != FeatureKind::kNumerical) continue;
    auto values = observed_values(dataset, f);
    if (values.empty()) {
      fill[f] = 0.5 * (spec.min + spec.max);
    } else {
      std::sort(values.begin(), values.end());
      fill[f] = quantile_sorted(values, 0.5);
    }
  }
  return fill;
}

namespace {

struct TrainingMatrix {
  std::size_t rows = 0;
  std::size_t width = 0;
  std::size_t outputs = 0;
  std::vector<double> columns;        // column-major
  std::vector<std::uint8_t> labels;   // row-major rows x outputs
  std::vector<bool> binary;           // column only holds 0/1

  double at(std::size_t column, std::uint32_t row) const { return columns[column * rows + row]; }
};

TrainingMatrix build_matrix(const Dataset& dataset, const FeatureEncoder& encoder,
                            std::span<const double> fill) {
  TrainingMatrix m;
  m.rows = dataset.size();
  m.width = encoder.width();
  m.outputs = dataset.schema().outcomes().size();
  m.columns.resize(m.rows * m.width);
  m.labels = dataset.labels();
  std::vector<double> x(m.width);
  for (std::size_t r = 0; r < m.rows; ++r) {
    encoder.encode(dataset.record(r), fill, x);
    for (std::size_t c = 0; c < m.width; ++c) m.columns[c * m.rows + r] = x[c];
  }
  m.binary.resize(m.width);
  for (std::size_t c = 0; c < m.width; ++c) {
    const auto* col = m.columns.data() + c * m.rows;
    m.binary[c] = std::all_of(col, col + m.rows, [](double v) { return v == 0.0 || v == 1.0; });
  }
  return m;
}

class TreeBuilder {
 public:
  TreeBuilder(const TrainingMatrix& data, const ForestParams& params, std::size_t mtry,
              std::uint64_t seed)
      : data_(data), params_(params), mtry_(mtry), rng_(seed) {
    const std::size_t m = data_.outputs;
    total_.resize(m);
    left_.resize(m);
    best_left_.resize(m);
    column_order_.resize(data_.width);
    std::iota(column_order_.begin(), column_order_.end(), std::size_t{0});
  }

  DecisionTree grow() {
    std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(data_.rows - 1));
    samples_.resize(data_.rows);
    for (auto& s : samples_) s = pick(rng_);
    build(0, samples_.size(), 0);
    return DecisionTree(data_.outputs, std::move(nodes_), std::move(values_));
  }

 private:
  std::int32_t build(std::size_t begin, std::size_t end, int depth) {
    const std::size_t m = data_.outputs;
    const auto index = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();
    values_.resize(values_.size() + m);

    const std::size_t count = end - begin;
    std::fill(total_.begin(), total_.end(), 0);
    for (std::size_t i = begin; i < end; ++i) {
      const auto* y = &data_.labels[samples_[i] * m];
      for (std::size_t k = 0; k < m; ++k) total_[k] += y[k];
    }
    bool pure = true;
    for (std::size_t k = 0; k < m; ++k) {
      values_[static_cast<std::size_t>(index) * m + k] =
          static_cast<double>(total_[k]) / static_cast<double>(count);
      if (total_[k] != 0 && total_[k] != count) pure = false;
    }
    nodes_[static_cast<std::size_t>(index)].cover = static_cast<double>(count);

    const auto min_leaf = static_cast<std::size_t>(std::max(1, params_.min_leaf));
    if (pure || depth >= params_.max_depth || count < 2 * min_leaf) return index;

    const auto split = find_split(begin, end, min_leaf);
    if (!split) return index;

    const auto [column, threshold] = *split;
    auto mid = std::partition(samples_.begin() + static_cast<std::ptrdiff_t>(begin),
                              samples_.begin() + static_cast<std::ptrdiff_t>(end),
                              [&](std::uint32_t s) { return data_.at(column, s) <= threshold; });
    const auto middle = static_cast<std::size_t>(mid - samples_.begin());
    const auto left = build(begin, middle, depth + 1);
    const auto right = build(middle, end, depth + 1);
    auto& node = nodes_[static_cast<std::size_t>(index)];
    node.column = static_cast<std::int32_t>(column);
    node.threshold = threshold;
    node.left = left;
    node.right = right;
    return index;
  }

  // Maximizes sum_k (posL_k^2 / nL + posR_k^2 / nR), which is the same as
  // minimizing the count-weighted Gini impurity summed over outcomes.
  std::optional<std::pair<std::size_t, double>> find_split(std::size_t begin, std::size_t end,
                                                           std::size_t min_leaf) {
    const std::size_t m = data_.outputs;
    const std::size_t count = end - begin;

    // Partial Fisher-Yates draw, then ascending order so that ties go to the
    // lowest column index.
    for (std::size_t i = 0; i < mtry_; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, data_.width - 1);
      std::swap(column_order_[i], column_order_[pick(rng_)]);
    }
    candidates_.assign(column_order_.begin(), column_order_.begin() + static_cast<std::ptrdiff_t>(mtry_));
    std::sort(candidates_.begin(), candidates_.end());

    double parent = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      parent += static_cast<double>(total_[k]) * static_cast<double>(total_[k]) / static_cast<double>(count);
    }
    double best = parent + 1e-12 * static_cast<double>(count);
    std::optional<std::pair<std::size_t, double>> result;

    auto score = [&](std::size_t n_left) {
      const double nl = static_cast<double>(n_left);
      const double nr = static_cast<double>(count - n_left);
      double s = 0.0;
      for (std::size_t k = 0; k < m; ++k) {
        const double pl = static_cast<double>(left_[k]);
        const double pr = static_cast<double>(total_[k] - left_[k]);
        s += pl * pl / nl + pr * pr / nr;
      }
      return s;
    };

    for (std::size_t column : candidates_) {
      if (data_.binary[column]) {
        std::fill(left_.begin(), left_.end(), 0);
        std::size_t n_left = 0;
        for (std::size_t i = begin; i < end; ++i) {
          const auto s = samples_[i];
          if (data_.at(column, s) == 0.0) {
            ++n_left;
            const auto* y = &data_.labels[s * m];
            for (std::size_t k = 0; k < m; ++k) left_[k] += y[k];
          }
        }
        if (n_left < min_leaf || count - n_left < min_leaf) continue;
        const double s = score(n_left);
        if (s > best) {
          best = s;
          result = {{column, 0.5}};
        }
        continue;
      }

      sorted_.clear();
      for (std::size_t i = begin; i < end; ++i) {
        sorted_.emplace_back(data_.at(column, samples_[i]), samples_[i]);
      }
      std::sort(sorted_.begin(), sorted_.end());
      if (sorted_.front().first == sorted_.back().first) continue;
      std::fill(left_.begin(), left_.end(), 0);
      for (std::size_t i = 0; i + 1 < count; ++i) {
        const auto* y = &data_.labels[sorted_[i].second * m];
        for (std::size_t k = 0; k < m; ++k) left_[k] += y[k];
        const std::size_t n_left = i + 1;
        if (n_left < min_leaf) continue;
        if (count - n_left < min_leaf) break;
        const double lo = sorted_[i].first;
        const double hi = sorted_[i + 1].first;
        if (lo == hi) continue;
        const double s = score(n_left);
        if (s > best) {
          best = s;
          double threshold = lo + (hi - lo) / 2.0;
          if (threshold >= hi) threshold = lo;
          result = {{column, threshold}};
        }
      }
    }
    return result;
  }

  const TrainingMatrix& data_;
  const ForestParams& params_;
  std::size_t mtry_;
  std::mt19937_64 rng_;
  std::vector<std::uint32_t> samples_;
  std::vector<TreeNode> nodes_;
  std::vector<double> values_;
  std::vector<std::size_t> total_, left_, best_left_;
  std::vector<std::size_t> column_order_, candidates_;
  std::vector<std::pair<double, std::uint32_t>> sorted_;
};

}  // namespace

RandomForest train_forest(const Dataset& dataset, const ForestParams& params, std::uint64_t seed,
                          Execution exec) {
  if (dataset.empty()) throw Error(ErrorCode::kPrecondition, "cannot train on an empty dataset");
  if (!dataset.has_labels()) throw Error(ErrorCode::kPrecondition, "training needs a labeled dataset");
  if (params.n_trees < 1) throw Error(ErrorCode::kValidation, "n_trees must be >= 1", "n_trees");
  if (params.max_depth < 0) throw Error(ErrorCode::kValidation, "max_depth must be >= 0", "max_depth");
  const auto& schema = dataset.schema();
  for (std::size_t o = 0; o < schema.outcomes().size(); ++o) {
    std::size_t positives = 0;
    for (std::size_t r = 0; r < dataset.size(); ++r) positives += dataset.label(r, o);
    if (positives == 0 || positives == dataset.size()) {
      throw Error(ErrorCode::kDegenerateLabels,
                  "outcome '" + schema.outcomes()[o] + "' has a single class in the training data",
                  schema.outcomes()[o]);
    }
  }

  auto fill = imputation_values(dataset);
  FeatureEncoder encoder(schema);
  const auto matrix = build_matrix(dataset, encoder, fill);
  std::size_t mtry = 0;
  if (params.features_per_split_fraction > 0) {
    mtry = static_cast<std::size_t>(
        std::lround(params.features_per_split_fraction * static_cast<double>(matrix.width)));
  } else {
    mtry = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(matrix.width))));
  }
  mtry = std::clamp<std::size_t>(mtry, 1, matrix.width);

  std::vector<DecisionTree> trees(static_cast<std::size_t>(params.n_trees));
  for_each_index(exec, trees.size(), [&](std::size_t t) {
    TreeBuilder builder(matrix, params, mtry, mix_seed(seed, t));
    trees[t] = builder.grow();
  });

  TrainingMetadata metadata{params, seed, dataset_fingerprint(dataset), dataset.size()};
  RandomForest provisional(dataset.schema_ptr(), trees, fill, {}, metadata);
  const auto predictions = provisional.predict_batch(dataset.records(), exec);
  std::vector<double> base(schema.outcomes().size(), 0.0);
  for (const auto& p : predictions) {
    for (std::size_t k = 0; k < base.size(); ++k) base[k] += p[k];
  }
  for (auto& b : base) b = std::clamp(b / static_cast<double>(predictions.size()), 0.0, 1.0);
  return RandomForest(dataset.schema_ptr(), std::move(trees), std::move(fill), std::move(base),
                      std::move(metadata));
}

}  // namespace riskexplain
