#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace riskexplain {

enum class Method { kLime, kShap };

std::string_view to_string(Method method);

struct Contribution {
  std::string feature;
  std::string condition;  // e.g. "hemoglobin <= 10.2"
  double value = 0.0;

  bool operator==(const Contribution&) const = default;
};

struct Attribution {
  Method method = Method::kShap;
  std::string outcome;
  double base_value = 0.0;
  double prediction = 0.0;
  std::vector<Contribution> contributions;  // descending |value|
  std::optional<double> surrogate_r2;       // LIME only

  const Contribution* find(std::string_view feature) const;
  bool operator==(const Attribution&) const = default;
};

// Stable sort by descending |value|; ties keep schema order.
void sort_contributions(std::vector<Contribution>& contributions);

}  // namespace riskexplain
