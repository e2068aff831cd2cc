#include "bcgnn/num/adam.hpp"

#include <cmath>

#include "bcgnn/error.hpp"

namespace bcgnn::num {

void adam_step(std::span<Parameter* const> params, AdamState& state) {
  if (state.first_moment.empty() && state.step == 0) {
    for (const Parameter* p : params) {
      state.first_moment.emplace_back(p->value.rows(), p->value.cols());
      state.second_moment.emplace_back(p->value.rows(), p->value.cols());
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("adam_step: optimizer tracks " + std::to_string(state.first_moment.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    Matrix& m = state.first_moment[k];
    Matrix& v = state.second_moment[k];
    require_same_shape(p.value, p.grad, "adam_step(value, grad)");
    require_same_shape(p.value, m, "adam_step(value, moment)");
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p.value[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

}  // namespace bcgnn::num
