#include "doob/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace doob {

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      state.v.size() != state.m.size()) {
    throw std::invalid_argument("adam_step: shape mismatch");
  }
  const auto& o = state.options;
  ++state.step;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = o.beta1 * state.m[i] + (1.0 - o.beta1) * grads[i];
    state.v[i] = o.beta2 * state.v[i] + (1.0 - o.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= o.learning_rate * mhat / (std::sqrt(vhat) + o.epsilon);
  }
}

}  // namespace doob
