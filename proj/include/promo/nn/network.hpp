#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "promo/nn/layers.hpp"

namespace promo::nn {

enum class LayerKind { linear, layer_norm, gelu, attention, bigru, embedding, residual_add, dropout };

std::string to_string(LayerKind kind);

/// One entry of a sequential network. Field use depends on the kind:
/// linear/embedding use in/out, attention uses heads, bigru uses out = 2*hidden,
/// dropout uses p, residual_add adds the output of layer `from` (-1 = input).
struct LayerDesc {
  LayerKind kind = LayerKind::linear;
  std::size_t in = 0;
  std::size_t out = 0;
  int heads = 1;
  double p = 0.0;
  int from = -1;
};

/// A sequential stack operating on one sequence of row vectors [n, input_dim].
/// Attention and GRU layers treat all rows as a single sequence; an embedding
/// layer expects a single input column of token ids.
struct NetworkSpec {
  std::size_t input_dim = 0;
  std::vector<LayerDesc> layers;

  /// Output width after every layer; throws ShapeError on disagreement.
  std::vector<std::size_t> widths() const;
  std::size_t output_dim() const { return widths().back(); }
};

template <class T>
class Network {
 public:
  Network(NetworkSpec spec, std::uint64_t seed);
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  const NetworkSpec& spec() const { return spec_; }
  ParameterStore<T>& parameters() { return params_; }
  const ParameterStore<T>& parameters() const { return params_; }

  Var apply(Tape<T>& tape, Var input) const;

 private:
  using Layer = std::variant<std::monostate, Linear<T>, LayerNorm<T>, MultiHeadAttention<T>, BiGRU<T>, Embedding<T>>;
  NetworkSpec spec_;
  ParameterStore<T> params_;
  std::vector<Layer> layers_;
};

template <class T>
struct ForwardResult {
  Tensor<T> output;
  std::unique_ptr<Tape<T>> tape;
  Var output_var;
};

/// Runs the network on input. Dropout is active only when train is set; its
/// masks derive from seed alone.
template <class T>
ForwardResult<T> forward(const Network<T>& net, const Tensor<T>& input, bool train, std::uint64_t seed);

/// Back-propagates output_gradient through a recorded forward pass and returns
/// one gradient per parameter in store order. Parameter gradients in the
/// network are reset first.
template <class T>
std::vector<Tensor<T>> backward(Network<T>& net, ForwardResult<T>& fwd, const Tensor<T>& output_gradient);

/// Optional fault injection applied to the analytic gradients before comparison.
using GradientTamper = std::function<void(std::vector<Tensor<double>>&)>;

/// Compares analytic parameter gradients of loss = sum(output * R), R random
/// from seed, with central finite differences of step 1e-3 (fourth-order
/// stencil). Returns max |a - n| / max(|a|, |n|, 1e-8) over all parameters.
double gradient_check(Network<double>& net, const Tensor<double>& input, std::uint64_t seed, bool train = false,
                      const GradientTamper& tamper = {});

}  // namespace promo::nn
