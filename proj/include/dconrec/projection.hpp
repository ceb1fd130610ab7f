#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "dconrec/errors.hpp"

namespace dconrec {

/// Euclidean projection onto {x : 0 <= x_i <= 1, sum x_i <= budget},
/// in place. Clamps into the box first; if the clamped sum still exceeds the
/// budget the KKT conditions give clamp(x - mu, 0, 1) for the mu > 0 that
/// makes the sum hit the budget, found by bisection to 1e-10 on the sum.
/// The returned point always satisfies sum <= budget, so the operator is
/// exactly idempotent.
inline void project_feasible_inplace(std::span<double> x, double budget) {
  if (budget <= 0) throw ConfigError("project_feasible: budget must be positive");

  double clamped_sum = 0.0;
  double hi = 0.0;
  for (double& v : x) {
    const double c = std::clamp(v, 0.0, 1.0);
    clamped_sum += c;
    hi = std::max(hi, v);
  }
  if (clamped_sum <= budget) {
    for (double& v : x) v = std::clamp(v, 0.0, 1.0);
    return;
  }

  const auto shifted_sum = [&](double mu) {
    double s = 0.0;
    for (double v : x) s += std::clamp(v - mu, 0.0, 1.0);
    return s;
  };

  double lo = 0.0;  // sum(lo) = clamped_sum > budget, sum(hi) = 0 <= budget
  double sum_hi = 0.0;
  for (int iter = 0; iter < 200 && budget - sum_hi > 1e-10; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const double s = shifted_sum(mid);
    if (s > budget) {
      lo = mid;
    } else {
      hi = mid;
      sum_hi = s;
    }
  }
  for (double& v : x) v = std::clamp(v - hi, 0.0, 1.0);
}

inline std::vector<double> project_feasible(std::vector<double> values,
                                            double budget) {
  project_feasible_inplace(values, budget);
  return values;
}

}  // namespace dconrec
