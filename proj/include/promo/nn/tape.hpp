#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "promo/core/rng.hpp"
#include "promo/nn/parameters.hpp"
#include "promo/nn/tensor.hpp"

namespace promo::nn {

/// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Ragged batching for scaled dot-product attention. Sequence b owns query
/// rows [query_offsets[b], query_offsets[b+1]) and key rows
/// [key_offsets[b], key_offsets[b+1]). key_mask (optional, one entry per key
/// row) marks padding keys that must receive zero weight.
struct AttentionLayout {
  std::vector<int> query_offsets;
  std::vector<int> key_offsets;
  std::vector<std::uint8_t> key_mask;

  static AttentionLayout single(int queries, int keys) { return {{0, queries}, {0, keys}, {}}; }
  static AttentionLayout self(const std::vector<int>& offsets) { return {offsets, offsets, {}}; }
  int batch() const { return static_cast<int>(query_offsets.size()) - 1; }
};

/// Records primitive operations in execution order so that gradients can be
/// replayed in exact reverse order. A tape is single use: backward() consumes
/// it.
template <class T>
class Tape {
 public:
  struct Options {
    bool train = false;           // enables dropout
    bool record = true;           // keep backward closures (false for inference)
    bool check_finite = true;     // throw NumericError on NaN/Inf activations
    std::uint64_t seed = 0;       // dropout mask stream
  };

  Tape() : Tape(Options{}) {}
  explicit Tape(Options options) : options_(options), rng_(options.seed) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool training() const { return options_.train; }
  bool recording() const { return options_.record; }
  std::size_t node_count() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  // ---- leaves -------------------------------------------------------------
  Var constant(Tensor<T> value);
  /// Constant leaf that refers to value without copying; value must outlive the tape.
  Var constant_view(const Tensor<T>& value);
  /// Differentiable leaf (gradient readable via grad() after backward).
  Var input(Tensor<T> value);
  Var param(Parameter<T>& p);

  const Tensor<T>& value(Var v) const;
  /// Gradient of a node after backward(); zero tensor when it received none.
  Tensor<T> grad(Var v) const;

  // ---- primitives ---------------------------------------------------------
  Var matmul(Var a, Var b, bool transpose_b = false);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, T s);
  /// a[n, m] + row[m] broadcast over rows.
  Var add_row(Var a, Var row);
  /// a * s where s is a 1-element node.
  Var mul_scalar(Var a, Var s);
  Var exp(Var a);
  Var gelu(Var a);
  Var sigmoid(Var a);
  Var softmax_rows(Var a);
  Var layer_norm(Var x, Var gamma, Var beta, T eps = T(1e-5));
  Var attention(Var q, Var k, Var v, const AttentionLayout& layout, int heads);
  /// One GRU step: x[B,in], h[B,H], wx[in,3H], wh[H,3H], bx[3H], bh[3H] (r,z,n gate order).
  Var gru_cell(Var x, Var h, Var wx, Var wh, Var bx, Var bh);
  Var gather_rows(Var table, std::vector<int> rows);
  Var concat_rows(std::span<const Var> parts);
  Var concat_cols(Var a, Var b);
  Var dropout(Var a, T p);
  Var l2_normalize_rows(Var a, T eps = T(1e-12));
  /// Mean over row segments: output row b = mean of rows [offsets[b], offsets[b+1]).
  Var segment_mean(Var a, std::vector<int> offsets);
  Var reshape(Var a, Shape shape);
  Var sum(Var a);
  Var mean(Var a);
  /// Mean squared error over all elements.
  Var mse(Var prediction, Var target);
  /// Mean over rows of softmax cross-entropy against integer targets.
  Var cross_entropy_rows(Var logits, std::vector<int> targets);
  Var transpose(Var a);

  // ---- reverse pass ---------------------------------------------------------
  void backward(Var output, const Tensor<T>& output_grad);
  /// Seeds d(output)/d(output) = 1 for a scalar output.
  void backward(Var scalar_output);

 private:
  struct Node {
    Tensor<T> value;
    const Tensor<T>* external = nullptr;  // parameter leaf value
    Tensor<T>* grad_sink = nullptr;       // parameter leaf gradient
    Tensor<T> grad;
    bool has_grad = false;
    bool needs_grad = false;
    std::function<void(Tape&, int)> backward;
  };

  const Tensor<T>& val(int id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
  }
  bool needs(Var v) const { return nodes_[v.id].needs_grad; }
  Tensor<T>& grad_buffer(int id);
  const Tensor<T>& node_grad(int id) const { return nodes_[id].grad; }
  Var push(Tensor<T> value, bool needs_grad, std::function<void(Tape&, int)> backward, const char* op);
  void check(Var v) const;

  Options options_;
  Rng rng_;
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace promo::nn
