#include "promo/nn/optim.hpp"

#include <cmath>

namespace promo::nn {

template <class T>
AdamWState<T>::AdamWState(const ParameterStore<T>& store, AdamWConfig cfg) : config(cfg) {
  for (const auto& p : store) {
    m.emplace_back(p.value.shape());
    v.emplace_back(p.value.shape());
  }
}

template <class T>
void adamw_step(ParameterStore<T>& store, AdamWState<T>& state) {
  if (state.m.size() != store.size() || state.v.size() != store.size()) {
    throw ShapeError("optimizer state does not match the parameter store");
  }
  if (state.step < 0) throw DomainError("optimizer step counter is negative");
  std::size_t i = 0;
  for (const auto& p : store) {
    if (p.trainable && !p.grad.all_finite()) throw NumericError("non-finite gradient for parameter " + p.name);
    if (state.m[i].shape() != p.value.shape()) throw ShapeError("moment shape mismatch for " + p.name);
    ++i;
  }
  const auto& c = state.config;
  const std::int64_t t = ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
  const double decay = 1.0 - c.lr * c.weight_decay;
  i = 0;
  for (auto& p : store) {
    Tensor<T>& m = state.m[i];
    Tensor<T>& v = state.v[i];
    ++i;
    if (!p.trainable) continue;
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      const double mk = c.beta1 * m[k] + (1.0 - c.beta1) * g;
      const double vk = c.beta2 * v[k] + (1.0 - c.beta2) * g * g;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double update = (mk / bc1) / (std::sqrt(vk / bc2) + c.eps);
      p.value[k] = static_cast<T>(p.value[k] * decay - c.lr * update);
    }
  }
}

template struct AdamWState<float>;
template struct AdamWState<double>;
template void adamw_step<float>(ParameterStore<float>&, AdamWState<float>&);
template void adamw_step<double>(ParameterStore<double>&, AdamWState<double>&);

}  // namespace promo::nn
