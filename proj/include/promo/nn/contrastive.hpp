#pragma once

#include <vector>

#include "promo/nn/tape.hpp"

namespace promo::nn {

/// Symmetric in-batch classification loss. a and b are [B, d] row-normalized
/// embeddings of matched pairs; logits = exp(log_scale) * a b^T and the target
/// of row i is column i in both directions.
template <class T>
Var symmetric_contrastive_loss(Tape<T>& tape, Var a, Var b, Var log_scale) {
  const std::size_t n = tape.value(a).rows();
  Var logits = tape.mul_scalar(tape.matmul(a, b, true), tape.exp(log_scale));
  std::vector<int> diag(n);
  for (std::size_t i = 0; i < n; ++i) diag[i] = static_cast<int>(i);
  Var l1 = tape.cross_entropy_rows(logits, diag);
  Var l2 = tape.cross_entropy_rows(tape.transpose(logits), diag);
  return tape.scale(tape.add(l1, l2), T(0.5));
}

/// Fraction of rows i whose similarity to column i strictly exceeds every
/// other column of the same row (ties count as misses).
template <class T>
double top1_accuracy(const Tensor<T>& a, const Tensor<T>& b) {
  const std::size_t n = a.rows(), d = a.cols();
  if (b.rows() != n || b.cols() != d) throw ShapeError("top1_accuracy: embedding shapes differ");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    auto sim = [&](std::size_t j) {
      double s = 0;
      for (std::size_t k = 0; k < d; ++k) s += static_cast<double>(a.at(i, k)) * b.at(j, k);
      return s;
    };
    const double own = sim(i);
    bool best = true;
    for (std::size_t j = 0; j < n && best; ++j)
      if (j != i && sim(j) >= own) best = false;
    hits += best;
  }
  return n ? static_cast<double>(hits) / static_cast<double>(n) : 0.0;
}

}  // namespace promo::nn
