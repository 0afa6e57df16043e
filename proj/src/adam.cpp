#include "diqa/adam.hpp"

#include <cmath>
#include <utility>

namespace diqa {

template <typename T>
AdamState<T> AdamState<T>::zeros_like(const ParamSet<T>& params, AdamHyper hyper) {
  AdamState<T> s;
  s.hyper = hyper;
  for (const auto& e : params) {
    s.first_moment.add(e.name, e.tensor.shape());
    s.second_moment.add(e.name, e.tensor.shape());
  }
  return s;
}

template <typename T>
void adam_step(ParamSet<T>& params, AdamState<T>& state) {
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("optimizer state tracks " + std::to_string(state.first_moment.size()) +
                         " parameters, model has " + std::to_string(params.size()));
  }
  state.step += 1;
  const auto& h = state.hyper;
  const double correction1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  for (auto& e : params) {
    auto& m = state.first_moment.at(e.name);
    auto& v = state.second_moment.at(e.name);
    if (m.shape() != e.tensor.shape()) {
      throw DimensionError("optimizer state for '" + e.name + "' has shape " + shape_str(m.shape()) +
                           ", parameter has " + shape_str(e.tensor.shape()));
    }
    if (!e.tensor.has_grad()) continue;
    auto grad = std::as_const(e.tensor).grad();
    auto value = e.tensor.data();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      const double mi = h.beta1 * static_cast<double>(m[i]) + (1.0 - h.beta1) * g;
      const double vi = h.beta2 * static_cast<double>(v[i]) + (1.0 - h.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double m_hat = mi / correction1;
      const double v_hat = vi / correction2;
      value[i] = static_cast<T>(static_cast<double>(value[i]) - h.learning_rate * m_hat / (std::sqrt(v_hat) + h.epsilon));
    }
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(ParamSet<float>&, AdamState<float>&);
template void adam_step(ParamSet<double>&, AdamState<double>&);

}  // namespace diqa
