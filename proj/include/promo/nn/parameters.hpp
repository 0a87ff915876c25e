#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <string>

#include "promo/core/rng.hpp"
#include "promo/nn/tensor.hpp"

namespace promo::nn {

template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;
};

/// Owns every parameter of a model. Addresses are stable for the lifetime of
/// the store, so layers keep raw pointers into it.
template <class T>
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  Parameter<T>& add(const std::string& name, Tensor<T> init, bool trainable = true) {
    if (index_.count(name)) throw DomainError("duplicate parameter name: " + name);
    Tensor<T> grad(init.shape());
    params_.push_back(Parameter<T>{name, std::move(init), std::move(grad), trainable});
    index_[name] = params_.size() - 1;
    return params_.back();
  }

  Parameter<T>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw DomainError("unknown parameter: " + name);
    return params_[it->second];
  }
  const Parameter<T>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw DomainError("unknown parameter: " + name);
    return params_[it->second];
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  std::size_t element_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad() {
    for (auto& p : params_) p.grad.fill(T(0));
  }

  /// Copies values from another store with identical names and shapes.
  template <class U>
  void copy_values_from(const ParameterStore<U>& other) {
    for (auto& p : params_) {
      const auto& src = other.get(p.name);
      if (src.value.shape() != p.value.shape()) throw ShapeError("shape mismatch copying parameter " + p.name);
      for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] = static_cast<T>(src.value[i]);
    }
  }

 private:
  std::deque<Parameter<T>> params_;
  std::map<std::string, std::size_t> index_;
};

/// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
template <class T>
Tensor<T> init_uniform_fan_in(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor<T> t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <class T>
Tensor<T> init_normal(Shape shape, double stddev, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(rng.normal(0.0, stddev));
  return t;
}

}  // namespace promo::nn
