#include "emtune/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "emtune/error.hpp"

namespace emtune {

GradCheckResult grad_check(const ScalarObjective& f, std::span<const double> params,
                           double perturbation) {
  if (!(perturbation > 0.0)) throw ConfigError("grad_check: perturbation must be positive");

  std::vector<double> analytic;
  const double f0 = f(params, &analytic);
  if (!std::isfinite(f0)) throw NumericError("grad_check: objective is not finite at the base point");
  if (analytic.size() != params.size()) {
    throw DimensionError("grad_check: analytic gradient has " + std::to_string(analytic.size()) +
                         " entries for " + std::to_string(params.size()) + " parameters");
  }

  GradCheckResult result;
  std::vector<double> probe(params.begin(), params.end());
  for (std::size_t k = 0; k < probe.size(); ++k) {
    const double saved = probe[k];
    probe[k] = saved + perturbation;
    const double plus = f(probe, nullptr);
    probe[k] = saved - perturbation;
    const double minus = f(probe, nullptr);
    probe[k] = saved;
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      throw NumericError("grad_check: objective is not finite when perturbing coordinate " +
                         std::to_string(k));
    }
    const double numeric = (plus - minus) / (2.0 * perturbation);
    const double denom = std::max(1e-12, std::abs(analytic[k]) + std::abs(numeric));
    const double rel = std::abs(analytic[k] - numeric) / denom;
    if (rel > result.max_relative_error || k == 0) {
      result.max_relative_error = std::max(result.max_relative_error, rel);
      result.worst_index = k;
      result.analytic_at_worst = analytic[k];
      result.numeric_at_worst = numeric;
    }
  }
  return result;
}

}  // namespace emtune
