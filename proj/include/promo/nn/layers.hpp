#pragma once

#include <string>
#include <vector>

#include "promo/core/rng.hpp"
#include "promo/nn/parameters.hpp"
#include "promo/nn/tape.hpp"

namespace promo::nn {

/// y = x W + b with W stored as [in, out].
template <class T>
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
         bool bias = true);
  Var operator()(Tape<T>& tape, Var x) const;

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }
  Parameter<T>* weight() const { return weight_; }
  Parameter<T>* bias() const { return bias_; }

 private:
  std::size_t in_ = 0, out_ = 0;
  Parameter<T>* weight_ = nullptr;
  Parameter<T>* bias_ = nullptr;
};

template <class T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore<T>& store, const std::string& name, std::size_t dim);
  Var operator()(Tape<T>& tape, Var x) const;

 private:
  Parameter<T>* gamma_ = nullptr;
  Parameter<T>* beta_ = nullptr;
};

template <class T>
class Embedding {
 public:
  Embedding() = default;
  Embedding(ParameterStore<T>& store, const std::string& name, std::size_t vocab, std::size_t dim, Rng& rng);
  Var operator()(Tape<T>& tape, std::vector<int> ids) const;
  std::size_t vocab() const { return vocab_; }
  std::size_t dim() const { return dim_; }

 private:
  std::size_t vocab_ = 0, dim_ = 0;
  Parameter<T>* table_ = nullptr;
};

/// Multi-head attention with separate query/key/value/output projections.
template <class T>
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore<T>& store, const std::string& name, std::size_t dim, int heads, Rng& rng);

  Var operator()(Tape<T>& tape, Var query_in, Var memory, const AttentionLayout& layout) const;
  /// Projects a memory once so repeated queries can reuse it.
  std::pair<Var, Var> project_memory(Tape<T>& tape, Var memory) const;
  Var attend(Tape<T>& tape, Var query_in, Var keys, Var values, const AttentionLayout& layout) const;
  int heads() const { return heads_; }

 private:
  int heads_ = 1;
  Linear<T> q_, k_, v_, o_;
};

/// Linear -> GELU -> dropout -> Linear.
template <class T>
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParameterStore<T>& store, const std::string& name, std::size_t dim, std::size_t hidden, Rng& rng,
              T dropout = T(0));
  Var operator()(Tape<T>& tape, Var x) const;

 private:
  Linear<T> in_, out_;
  T dropout_ = T(0);
};

/// Single-layer bidirectional GRU over ragged sequences. Rows of the input are
/// the concatenated time steps of all sequences; offsets delimit sequences.
/// Output row r is [forward state, backward state] at that position.
template <class T>
class BiGRU {
 public:
  BiGRU() = default;
  BiGRU(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t hidden, Rng& rng);
  Var operator()(Tape<T>& tape, Var x, const std::vector<int>& offsets) const;
  std::size_t hidden() const { return hidden_; }

 private:
  struct Direction {
    Parameter<T>*wx = nullptr, *wh = nullptr, *bx = nullptr, *bh = nullptr;
  };
  Var run(Tape<T>& tape, Var x, const std::vector<int>& offsets, const Direction& d, bool reverse) const;

  std::size_t in_ = 0, hidden_ = 0;
  Direction fwd_, bwd_;
};

/// Interleaved sinusoidal embedding: component 2i is sin(t * w_i) and 2i+1 is
/// cos(t * w_i), with w_i = 10000^(-2i/dim).
template <class T>
Tensor<T> sinusoidal_embedding(double t, std::size_t dim);

/// One embedding row per entry of positions, stacked into [n, dim].
template <class T>
Tensor<T> sinusoidal_table(const std::vector<double>& positions, std::size_t dim);

}  // namespace promo::nn
