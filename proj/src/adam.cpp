#include "emtune/adam.hpp"

#include <cmath>

#include "emtune/error.hpp"

namespace emtune {

AdamState AdamState::for_params(std::span<Matrix* const> params) {
  AdamState state;
  for (const Matrix* p : params) {
    state.first_moment.emplace_back(p->rows(), p->cols());
    state.second_moment.emplace_back(p->rows(), p->cols());
  }
  return state;
}

void adam_update(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state,
                 double learning_rate) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
      params.size() != state.second_moment.size()) {
    throw DimensionError("adam_update: " + std::to_string(params.size()) + " parameters, " +
                         std::to_string(grads.size()) + " gradients, " +
                         std::to_string(state.first_moment.size()) + " moment slots");
  }
  bool any_nonzero = false;
  for (std::size_t k = 0; k < params.size(); ++k) {
    require_same_shape(*params[k], grads[k], "adam_update gradient");
    require_same_shape(*params[k], state.first_moment[k], "adam_update first moment");
    require_same_shape(*params[k], state.second_moment[k], "adam_update second moment");
    for (double g : grads[k].values()) {
      if (!std::isfinite(g)) {
        throw NumericError("adam_update: non-finite gradient in parameter " + std::to_string(k));
      }
      any_nonzero = any_nonzero || g != 0.0;
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);

  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k]->values();
    auto g = grads[k].values();
    auto m = state.first_moment[k].values();
    auto v = state.second_moment[k].values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      if (!any_nonzero) continue;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

}  // namespace emtune
