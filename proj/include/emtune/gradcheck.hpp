#pragma once

#include <functional>
#include <span>
#include <vector>

namespace emtune {

// Scalar objective over a flat parameter vector. When `grad` is non-null the
// callee writes the analytic gradient into it (resized to params.size()).
using ScalarObjective = std::function<double(std::span<const double> params, std::vector<double>* grad)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

// Central differences per coordinate against the analytic gradient. Returns
// max_k |a_k - n_k| / max(1e-12, |a_k| + |n_k|). Throws NumericError on a
// non-finite objective value, ConfigError on perturbation <= 0.
GradCheckResult grad_check(const ScalarObjective& f, std::span<const double> params,
                           double perturbation = 1e-5);

}  // namespace emtune
