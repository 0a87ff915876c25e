#include "promo/nn/network.hpp"

#include <algorithm>
#include <cmath>

namespace promo::nn {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::linear: return "linear";
    case LayerKind::layer_norm: return "layer_norm";
    case LayerKind::gelu: return "gelu";
    case LayerKind::attention: return "attention";
    case LayerKind::bigru: return "bigru";
    case LayerKind::embedding: return "embedding";
    case LayerKind::residual_add: return "residual_add";
    case LayerKind::dropout: return "dropout";
  }
  return "unknown";
}

std::vector<std::size_t> NetworkSpec::widths() const {
  if (input_dim == 0) throw ShapeError("network input dimension must be positive");
  std::vector<std::size_t> w;
  std::size_t cur = input_dim;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerDesc& l = layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + to_string(l.kind) + ")";
    switch (l.kind) {
      case LayerKind::linear:
        if (l.in != cur) throw ShapeError(where + " expects " + std::to_string(l.in) + " inputs, previous width " + std::to_string(cur));
        if (l.out == 0) throw ShapeError(where + " has zero outputs");
        cur = l.out;
        break;
      case LayerKind::embedding:
        if (cur != 1) throw ShapeError(where + " expects a single token-id column");
        if (l.in == 0 || l.out == 0) throw ShapeError(where + " needs vocabulary and width");
        cur = l.out;
        break;
      case LayerKind::attention:
        if (l.heads <= 0 || cur % static_cast<std::size_t>(l.heads) != 0)
          throw ShapeError(where + ": width " + std::to_string(cur) + " not divisible by heads");
        break;
      case LayerKind::bigru:
        if (l.out == 0 || l.out % 2 != 0) throw ShapeError(where + " output must be twice the hidden size");
        cur = l.out;
        break;
      case LayerKind::residual_add: {
        if (l.from < -1 || l.from >= static_cast<int>(i)) throw ShapeError(where + " refers to a later layer");
        const std::size_t src = l.from < 0 ? input_dim : w[l.from];
        if (src != cur) throw ShapeError(where + " adds width " + std::to_string(src) + " to width " + std::to_string(cur));
        break;
      }
      case LayerKind::dropout:
        if (l.p < 0.0 || l.p >= 1.0) throw ShapeError(where + " probability outside [0, 1)");
        break;
      case LayerKind::layer_norm:
      case LayerKind::gelu:
        break;
    }
    w.push_back(cur);
  }
  if (w.empty()) w.push_back(input_dim);
  return w;
}

template <class T>
Network<T>::Network(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  const auto widths = spec_.widths();
  Rng rng(seed);
  std::size_t cur = spec_.input_dim;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerDesc& l = spec_.layers[i];
    const std::string name = "layer" + std::to_string(i);
    switch (l.kind) {
      case LayerKind::linear: layers_.emplace_back(Linear<T>(params_, name, l.in, l.out, rng)); break;
      case LayerKind::layer_norm: layers_.emplace_back(LayerNorm<T>(params_, name, cur)); break;
      case LayerKind::attention: layers_.emplace_back(MultiHeadAttention<T>(params_, name, cur, l.heads, rng)); break;
      case LayerKind::bigru: layers_.emplace_back(BiGRU<T>(params_, name, cur, l.out / 2, rng)); break;
      case LayerKind::embedding: layers_.emplace_back(Embedding<T>(params_, name, l.in, l.out, rng)); break;
      default: layers_.emplace_back(std::monostate{}); break;
    }
    cur = widths[i];
  }
}

template <class T>
Var Network<T>::apply(Tape<T>& tape, Var input) const {
  const Tensor<T>& x = tape.value(input);
  if (x.cols() != spec_.input_dim) {
    throw ShapeError("network expects " + std::to_string(spec_.input_dim) + " input features, got " +
                     shape_string(x.shape()));
  }
  const int n = static_cast<int>(x.rows());
  std::vector<Var> outs;
  Var cur = input;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerDesc& l = spec_.layers[i];
    const Layer& layer = layers_[i];
    switch (l.kind) {
      case LayerKind::linear: cur = std::get<Linear<T>>(layer)(tape, cur); break;
      case LayerKind::layer_norm: cur = std::get<LayerNorm<T>>(layer)(tape, cur); break;
      case LayerKind::gelu: cur = tape.gelu(cur); break;
      case LayerKind::attention:
        cur = std::get<MultiHeadAttention<T>>(layer)(tape, cur, cur, AttentionLayout::single(n, n));
        break;
      case LayerKind::bigru: cur = std::get<BiGRU<T>>(layer)(tape, cur, {0, n}); break;
      case LayerKind::embedding: {
        std::vector<int> ids;
        for (T v : tape.value(cur).values()) {
          const auto id = static_cast<long>(std::lround(static_cast<double>(v)));
          if (id < 0 || id >= static_cast<long>(l.in)) throw ShapeError("token id " + std::to_string(id) + " outside vocabulary");
          ids.push_back(static_cast<int>(id));
        }
        cur = std::get<Embedding<T>>(layer)(tape, std::move(ids));
        break;
      }
      case LayerKind::residual_add: cur = tape.add(cur, l.from < 0 ? input : outs[l.from]); break;
      case LayerKind::dropout: cur = tape.dropout(cur, static_cast<T>(l.p)); break;
    }
    outs.push_back(cur);
  }
  return cur;
}

template <class T>
ForwardResult<T> forward(const Network<T>& net, const Tensor<T>& input, bool train, std::uint64_t seed) {
  typename Tape<T>::Options opt;
  opt.train = train;
  opt.seed = seed;
  ForwardResult<T> r;
  r.tape = std::make_unique<Tape<T>>(opt);
  Var x = r.tape->constant(input);
  r.output_var = net.apply(*r.tape, x);
  r.output = r.tape->value(r.output_var);
  return r;
}

template <class T>
std::vector<Tensor<T>> backward(Network<T>& net, ForwardResult<T>& fwd, const Tensor<T>& output_gradient) {
  if (!fwd.tape) throw DomainError("forward result carries no tape");
  net.parameters().zero_grad();
  fwd.tape->backward(fwd.output_var, output_gradient);
  std::vector<Tensor<T>> grads;
  for (const auto& p : net.parameters()) grads.push_back(p.grad);
  return grads;
}

namespace {

double loss_value(const Network<double>& net, const Tensor<double>& input, const Tensor<double>& weights, bool train,
                  std::uint64_t seed) {
  Tape<double>::Options opt;
  opt.train = train;
  opt.seed = seed;
  opt.record = false;
  Tape<double> tape(opt);
  const Tensor<double>& out = tape.value(net.apply(tape, tape.constant(input)));
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * weights[i];
  return s;
}

}  // namespace

double gradient_check(Network<double>& net, const Tensor<double>& input, std::uint64_t seed, bool train,
                      const GradientTamper& tamper) {
  const std::uint64_t dropout_seed = derive_seed(seed, {1});
  auto fwd = forward(net, input, train, dropout_seed);
  Rng rng(derive_seed(seed, {2}));
  Tensor<double> weights(fwd.output.shape());
  for (auto& v : weights.values()) v = rng.normal();
  std::vector<Tensor<double>> analytic = backward(net, fwd, weights);
  if (tamper) tamper(analytic);

  constexpr double h = 1e-3;
  double worst = 0.0;
  std::size_t idx = 0;
  for (auto& p : net.parameters()) {
    const Tensor<double>& a = analytic[idx++];
    if (!p.trainable) continue;
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double orig = p.value[k];
      auto at = [&](double offset) {
        p.value[k] = orig + offset;
        return loss_value(net, input, weights, train, dropout_seed);
      };
      const double fp1 = at(h), fm1 = at(-h), fp2 = at(2 * h), fm2 = at(-2 * h);
      p.value[k] = orig;
      const double numeric = (8.0 * (fp1 - fm1) - (fp2 - fm2)) / (12.0 * h);
      const double denom = std::max({std::abs(a[k]), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a[k] - numeric) / denom);
    }
  }
  return worst;
}

template class Network<float>;
template class Network<double>;
template ForwardResult<float> forward(const Network<float>&, const Tensor<float>&, bool, std::uint64_t);
template ForwardResult<double> forward(const Network<double>&, const Tensor<double>&, bool, std::uint64_t);
template std::vector<Tensor<float>> backward(Network<float>&, ForwardResult<float>&, const Tensor<float>&);
template std::vector<Tensor<double>> backward(Network<double>&, ForwardResult<double>&, const Tensor<double>&);

}  // namespace promo::nn
