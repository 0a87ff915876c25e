#include "promo/nn/layers.hpp"

#include <cmath>

namespace promo::nn {

template <class T>
Linear<T>::Linear(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                  bool bias)
    : in_(in), out_(out) {
  if (in == 0 || out == 0) throw ShapeError("linear layer " + name + " needs nonzero dimensions");
  weight_ = &store.add(name + ".weight", init_uniform_fan_in<T>({in, out}, in, rng));
  if (bias) bias_ = &store.add(name + ".bias", init_uniform_fan_in<T>({out}, in, rng));
}

template <class T>
Var Linear<T>::operator()(Tape<T>& tape, Var x) const {
  if (tape.value(x).cols() != in_) {
    throw ShapeError("linear layer expects " + std::to_string(in_) + " input features, got " +
                     shape_string(tape.value(x).shape()));
  }
  Var y = tape.matmul(x, tape.param(*weight_));
  return bias_ ? tape.add_row(y, tape.param(*bias_)) : y;
}

template <class T>
LayerNorm<T>::LayerNorm(ParameterStore<T>& store, const std::string& name, std::size_t dim) {
  gamma_ = &store.add(name + ".gamma", Tensor<T>({dim}, T(1)));
  beta_ = &store.add(name + ".beta", Tensor<T>({dim}, T(0)));
}

template <class T>
Var LayerNorm<T>::operator()(Tape<T>& tape, Var x) const {
  return tape.layer_norm(x, tape.param(*gamma_), tape.param(*beta_));
}

template <class T>
Embedding<T>::Embedding(ParameterStore<T>& store, const std::string& name, std::size_t vocab, std::size_t dim,
                        Rng& rng)
    : vocab_(vocab), dim_(dim) {
  table_ = &store.add(name + ".table", init_normal<T>({vocab, dim}, 0.02, rng));
}

template <class T>
Var Embedding<T>::operator()(Tape<T>& tape, std::vector<int> ids) const {
  return tape.gather_rows(tape.param(*table_), std::move(ids));
}

template <class T>
MultiHeadAttention<T>::MultiHeadAttention(ParameterStore<T>& store, const std::string& name, std::size_t dim,
                                          int heads, Rng& rng)
    : heads_(heads),
      q_(store, name + ".q", dim, dim, rng),
      k_(store, name + ".k", dim, dim, rng),
      v_(store, name + ".v", dim, dim, rng),
      o_(store, name + ".o", dim, dim, rng) {
  if (heads <= 0 || dim % static_cast<std::size_t>(heads) != 0) {
    throw ShapeError("attention " + name + ": dimension " + std::to_string(dim) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
}

template <class T>
std::pair<Var, Var> MultiHeadAttention<T>::project_memory(Tape<T>& tape, Var memory) const {
  return {k_(tape, memory), v_(tape, memory)};
}

template <class T>
Var MultiHeadAttention<T>::attend(Tape<T>& tape, Var query_in, Var keys, Var values,
                                  const AttentionLayout& layout) const {
  Var q = q_(tape, query_in);
  return o_(tape, tape.attention(q, keys, values, layout, heads_));
}

template <class T>
Var MultiHeadAttention<T>::operator()(Tape<T>& tape, Var query_in, Var memory, const AttentionLayout& layout) const {
  auto [k, v] = project_memory(tape, memory);
  return attend(tape, query_in, k, v, layout);
}

template <class T>
FeedForward<T>::FeedForward(ParameterStore<T>& store, const std::string& name, std::size_t dim, std::size_t hidden,
                            Rng& rng, T dropout)
    : in_(store, name + ".in", dim, hidden, rng), out_(store, name + ".out", hidden, dim, rng), dropout_(dropout) {}

template <class T>
Var FeedForward<T>::operator()(Tape<T>& tape, Var x) const {
  return out_(tape, tape.dropout(tape.gelu(in_(tape, x)), dropout_));
}

template <class T>
BiGRU<T>::BiGRU(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t hidden, Rng& rng)
    : in_(in), hidden_(hidden) {
  auto make = [&](const std::string& prefix) {
    Direction d;
    d.wx = &store.add(prefix + ".wx", init_uniform_fan_in<T>({in, 3 * hidden}, hidden, rng));
    d.wh = &store.add(prefix + ".wh", init_uniform_fan_in<T>({hidden, 3 * hidden}, hidden, rng));
    d.bx = &store.add(prefix + ".bx", init_uniform_fan_in<T>({3 * hidden}, hidden, rng));
    d.bh = &store.add(prefix + ".bh", init_uniform_fan_in<T>({3 * hidden}, hidden, rng));
    return d;
  };
  fwd_ = make(name + ".fwd");
  bwd_ = make(name + ".bwd");
}

template <class T>
Var BiGRU<T>::run(Tape<T>& tape, Var x, const std::vector<int>& offsets, const Direction& d, bool reverse) const {
  const int batch = static_cast<int>(offsets.size()) - 1;
  int max_len = 0;
  for (int b = 0; b < batch; ++b) max_len = std::max(max_len, offsets[b + 1] - offsets[b]);
  const std::size_t H = hidden_;
  Var wx = tape.param(*d.wx), wh = tape.param(*d.wh), bx = tape.param(*d.bx), bh = tape.param(*d.bh);
  Var h = tape.constant(Tensor<T>({static_cast<std::size_t>(batch), H}));
  std::vector<Var> states(max_len);
  for (int step = 0; step < max_len; ++step) {
    // In the reverse pass sequences are right-aligned, so every sequence
    // starts from a zero state at its own final element.
    std::vector<int> rows(batch);
    Tensor<T> mask({static_cast<std::size_t>(batch), H});
    bool all_active = true;
    for (int b = 0; b < batch; ++b) {
      const int len = offsets[b + 1] - offsets[b];
      int position;
      bool active;
      if (reverse) {
        const int k = step - (max_len - len);  // k-th reverse step of this sequence
        position = len - 1 - k;
        active = k >= 0;
      } else {
        position = step;
        active = step < len;
      }
      rows[b] = active ? offsets[b] + position : offsets[b];
      if (!active) {
        all_active = false;
      } else {
        for (std::size_t c = 0; c < H; ++c) mask.at(b, c) = T(1);
      }
    }
    Var xt = tape.gather_rows(x, rows);
    Var cand = tape.gru_cell(xt, h, wx, wh, bx, bh);
    h = all_active ? cand : tape.add(h, tape.mul(tape.constant(std::move(mask)), tape.sub(cand, h)));
    states[step] = h;
  }
  // states[step] row b holds the state for (b, position(step)); gather back to ragged order.
  Var stacked = tape.concat_rows(std::span<const Var>(states));
  std::vector<int> index;
  index.reserve(offsets.back());
  for (int b = 0; b < batch; ++b) {
    const int len = offsets[b + 1] - offsets[b];
    for (int position = 0; position < len; ++position) {
      const int step = reverse ? (len - 1 - position) + (max_len - len) : position;
      index.push_back(step * batch + b);
    }
  }
  return tape.gather_rows(stacked, std::move(index));
}

template <class T>
Var BiGRU<T>::operator()(Tape<T>& tape, Var x, const std::vector<int>& offsets) const {
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != static_cast<int>(tape.value(x).rows())) {
    throw ShapeError("bi-GRU: offsets must span all input rows");
  }
  for (std::size_t b = 0; b + 1 < offsets.size(); ++b)
    if (offsets[b + 1] <= offsets[b]) throw ShapeError("bi-GRU: empty sequence");
  if (tape.value(x).cols() != in_) throw ShapeError("bi-GRU: expects " + std::to_string(in_) + " input features");
  return tape.concat_cols(run(tape, x, offsets, fwd_, false), run(tape, x, offsets, bwd_, true));
}

template <class T>
Tensor<T> sinusoidal_embedding(double t, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) throw DomainError("sinusoidal embedding needs an even dimension, got " + std::to_string(dim));
  Tensor<T> out({dim});
  for (std::size_t i = 0; i < dim / 2; ++i) {
    const double w = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
    out[2 * i] = static_cast<T>(std::sin(t * w));
    out[2 * i + 1] = static_cast<T>(std::cos(t * w));
  }
  return out;
}

template <class T>
Tensor<T> sinusoidal_table(const std::vector<double>& positions, std::size_t dim) {
  Tensor<T> out({positions.size(), dim});
  for (std::size_t r = 0; r < positions.size(); ++r) {
    const Tensor<T> e = sinusoidal_embedding<T>(positions[r], dim);
    std::copy(e.data(), e.data() + dim, out.data() + r * dim);
  }
  return out;
}

#define PROMO_INSTANTIATE(T)                                                     \
  template class Linear<T>;                                                      \
  template class LayerNorm<T>;                                                   \
  template class Embedding<T>;                                                   \
  template class MultiHeadAttention<T>;                                          \
  template class FeedForward<T>;                                                 \
  template class BiGRU<T>;                                                       \
  template Tensor<T> sinusoidal_embedding<T>(double, std::size_t);               \
  template Tensor<T> sinusoidal_table<T>(const std::vector<double>&, std::size_t);
PROMO_INSTANTIATE(float)
PROMO_INSTANTIATE(double)
#undef PROMO_INSTANTIATE

}  // namespace promo::nn
