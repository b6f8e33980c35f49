#include "riskexplain/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "riskexplain/error.hpp"

namespace riskexplain {

namespace {

std::vector<std::size_t> order_by_score(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  return order;
}

void check_sizes(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorCode::kValidation, "scores and labels differ in length");
  }
}

}  // namespace

std::optional<double> auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_sizes(scores, labels);
  const auto order = order_by_score(scores);
  // Walk tie groups in ascending score; each positive beats every negative
  // below its group and ties with the negatives inside it.
  double wins = 0.0;
  std::size_t neg_below = 0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::size_t pos = 0;
    std::size_t neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? pos : neg) += 1;
      ++j;
    }
    wins += static_cast<double>(pos) * static_cast<double>(neg_below) +
            0.5 * static_cast<double>(pos) * static_cast<double>(neg);
    neg_below += neg;
    n_pos += pos;
    n_neg += neg;
    i = j;
  }
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  return wins / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::vector<RocPoint> roc_curve(std::span<const double> scores,
                                std::span<const std::uint8_t> labels) {
  check_sizes(scores, labels);
  auto order = order_by_score(scores);
  std::reverse(order.begin(), order.end());
  const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t n_neg = labels.size() - n_pos;
  std::vector<RocPoint> points{{0.0, 0.0}};
  if (n_pos == 0 || n_neg == 0) {
    points.push_back({1.0, 1.0});
    return points;
  }
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? tp : fp) += 1;
      ++j;
    }
    points.push_back({static_cast<double>(fp) / static_cast<double>(n_neg),
                      static_cast<double>(tp) / static_cast<double>(n_pos)});
    i = j;
  }
  return points;
}

std::vector<OutcomeAuroc> evaluate_auroc(const RandomForest& model, const Dataset& dataset,
                                         Execution exec) {
  if (!dataset.has_labels()) throw Error(ErrorCode::kPrecondition, "AUROC needs a labeled dataset");
  if (!(dataset.schema() == model.schema())) {
    throw Error(ErrorCode::kSchemaMismatch, "dataset schema differs from the model's");
  }
  const auto predictions = model.predict_batch(dataset.records(), exec);
  std::vector<OutcomeAuroc> out;
  std::vector<double> scores(dataset.size());
  for (std::size_t o = 0; o < model.n_outputs(); ++o) {
    for (std::size_t r = 0; r < dataset.size(); ++r) scores[r] = predictions[r][o];
    const auto labels = dataset.outcome_labels(o);
    OutcomeAuroc entry;
    entry.outcome = model.schema().outcomes()[o];
    entry.auroc = auroc(scores, labels);
    if (entry.auroc) entry.roc = roc_curve(scores, labels);
    out.push_back(std::move(entry));
  }
  return out;
}

}  // namespace riskexplain
