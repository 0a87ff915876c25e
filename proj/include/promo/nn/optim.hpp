#pragma once

#include <cstdint>
#include <vector>

#include "promo/nn/parameters.hpp"

namespace promo::nn {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Moment accumulators, one pair per parameter of the store in store order.
template <class T>
struct AdamWState {
  AdamWConfig config;
  std::int64_t step = 0;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;

  AdamWState() = default;
  AdamWState(const ParameterStore<T>& store, AdamWConfig cfg);
};

/// Applies one decoupled-weight-decay Adam update to every trainable
/// parameter using the gradients accumulated in the store.
template <class T>
void adamw_step(ParameterStore<T>& store, AdamWState<T>& state);

}  // namespace promo::nn
