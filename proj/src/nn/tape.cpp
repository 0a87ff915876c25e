#include <type_traits>
#include "promo/nn/tape.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace promo::nn {
namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <class T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <class T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

template <class T>
MatMap<T> as_mat(Tensor<T>& t) {
  return MatMap<T>(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
template <class T>
ConstMatMap<T> as_mat(const Tensor<T>& t) {
  return ConstMatMap<T>(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

template <class T>
using Vec = Eigen::Array<T, Eigen::Dynamic, 1>;
template <class T>
Eigen::Map<Vec<T>> flat(Tensor<T>& t) {
  return Eigen::Map<Vec<T>>(t.data(), static_cast<Eigen::Index>(t.size()));
}
template <class T>
Eigen::Map<const Vec<T>> flat(const Tensor<T>& t) {
  return Eigen::Map<const Vec<T>>(t.data(), static_cast<Eigen::Index>(t.size()));
}

/// Messages built by concatenation are passed as callables so the happy path never allocates.
template <class Msg>
void require(bool ok, Msg&& msg) {
  if (ok) return;
  if constexpr (std::is_invocable_v<Msg>)
    throw ShapeError(msg());
  else
    throw ShapeError(std::string(msg));
}

/// sqrt(2/pi) of the tanh form of GELU.
template <class T>
constexpr T kGeluK = T(0.7978845608028654);

template <class T>
T sigmoid_value(T x) {
  return x >= 0 ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

}  // namespace

template <class T>
Var Tape<T>::push(Tensor<T> value, bool needs_grad, std::function<void(Tape&, int)> backward, const char* op) {
  if (consumed_) throw DomainError("tape already consumed by backward()");
  if (options_.check_finite && !value.all_finite()) {
    throw NumericError(std::string("non-finite activation produced by ") + op);
  }
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad && options_.record;
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <class T>
void Tape<T>::check(Var v) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) throw DomainError("variable does not belong to this tape");
}

template <class T>
Tensor<T>& Tape<T>::grad_buffer(int id) {
  Node& n = nodes_[id];
  if (n.grad_sink) return *n.grad_sink;
  if (!n.has_grad) {
    n.grad = Tensor<T>(val(id).shape());
    n.has_grad = true;
  }
  return n.grad;
}

template <class T>
Var Tape<T>::constant(Tensor<T> value) {
  return push(std::move(value), false, nullptr, "constant");
}

template <class T>
Var Tape<T>::constant_view(const Tensor<T>& value) {
  if (consumed_) throw DomainError("tape already consumed by backward()");
  Node n;
  n.external = &value;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <class T>
Var Tape<T>::input(Tensor<T> value) {
  Var v = push(std::move(value), true, nullptr, "input");
  nodes_[v.id].backward = nullptr;
  return v;
}

template <class T>
Var Tape<T>::param(Parameter<T>& p) {
  if (consumed_) throw DomainError("tape already consumed by backward()");
  Node n;
  n.external = &p.value;
  n.needs_grad = p.trainable && options_.record;
  if (n.needs_grad) n.grad_sink = &p.grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <class T>
const Tensor<T>& Tape<T>::value(Var v) const {
  check(v);
  return val(v.id);
}

template <class T>
Tensor<T> Tape<T>::grad(Var v) const {
  check(v);
  const Node& n = nodes_[v.id];
  if (n.grad_sink) return *n.grad_sink;
  if (!n.has_grad) return Tensor<T>(val(v.id).shape());
  return n.grad;
}

// ---------------------------------------------------------------------------

template <class T>
Var Tape<T>::matmul(Var a, Var b, bool transpose_b) {
  check(a);
  check(b);
  const Tensor<T>& A = val(a.id);
  const Tensor<T>& B = val(b.id);
  require(B.rank() == 2, [&] { return "matmul: right operand must be a matrix, got " + shape_string(B.shape()); });
  const std::size_t k = transpose_b ? B.shape()[1] : B.shape()[0];
  const std::size_t m = transpose_b ? B.shape()[0] : B.shape()[1];
  require(A.cols() == k, [&] { return "matmul: inner dimensions differ: " + shape_string(A.shape()) + " x " +
                             shape_string(B.shape()) + (transpose_b ? "^T" : ""); });
  Shape out_shape = A.shape();
  out_shape.back() = m;
  Tensor<T> out(out_shape);
  if (transpose_b)
    as_mat(out).noalias() = as_mat(A) * as_mat(B).transpose();
  else
    as_mat(out).noalias() = as_mat(A) * as_mat(B);
  const int ia = a.id, ib = b.id;
  return push(std::move(out), needs(a) || needs(b),
              [ia, ib, transpose_b](Tape& t, int self) {
                const Tensor<T>& G = t.node_grad(self);
                const Tensor<T>& A = t.val(ia);
                const Tensor<T>& B = t.val(ib);
                if (t.nodes_[ia].needs_grad) {
                  Tensor<T>& gA = t.grad_buffer(ia);
                  if (transpose_b)
                    as_mat(gA).noalias() += as_mat(G) * as_mat(B);
                  else
                    as_mat(gA).noalias() += as_mat(G) * as_mat(B).transpose();
                }
                if (t.nodes_[ib].needs_grad) {
                  Tensor<T>& gB = t.grad_buffer(ib);
                  if (transpose_b)
                    as_mat(gB).noalias() += as_mat(G).transpose() * as_mat(A);
                  else
                    as_mat(gB).noalias() += as_mat(A).transpose() * as_mat(G);
                }
              },
              "matmul");
}

template <class T>
Var Tape<T>::add(Var a, Var b) {
  check(a);
  check(b);
  const Tensor<T>& A = val(a.id);
  const Tensor<T>& B = val(b.id);
  require(A.size() == B.size(), [&] { return "add: shape mismatch " + shape_string(A.shape()) + " vs " + shape_string(B.shape()); });
  Tensor<T> out(A.shape());
  flat(out) = flat(A) + flat(B);
  const int ia = a.id, ib = b.id;
  return push(std::move(out), needs(a) || needs(b),
              [ia, ib](Tape& t, int self) {
                const Tensor<T>& G = t.node_grad(self);
                for (int id : {ia, ib}) {
                  if (!t.nodes_[id].needs_grad) continue;
                  flat(t.grad_buffer(id)) += flat(G);
                }
              },
              "add");
}

template <class T>
Var Tape<T>::sub(Var a, Var b) {
  check(a);
  check(b);
  const Tensor<T>& A = val(a.id);
  const Tensor<T>& B = val(b.id);
  require(A.size() == B.size(), [&] { return "sub: shape mismatch " + shape_string(A.shape()) + " vs " + shape_string(B.shape()); });
  Tensor<T> out(A.shape());
  flat(out) = flat(A) - flat(B);
  const int ia = a.id, ib = b.id;
  return push(std::move(out), needs(a) || needs(b),
              [ia, ib](Tape& t, int self) {
                const Tensor<T>& G = t.node_grad(self);
                if (t.nodes_[ia].needs_grad) flat(t.grad_buffer(ia)) += flat(G);
                if (t.nodes_[ib].needs_grad) flat(t.grad_buffer(ib)) -= flat(G);
              },
              "sub");
}

template <class T>
Var Tape<T>::mul(Var a, Var b) {
  check(a);
  check(b);
  const Tensor<T>& A = val(a.id);
  const Tensor<T>& B = val(b.id);
  require(A.size() == B.size(), [&] { return "mul: shape mismatch " + shape_string(A.shape()) + " vs " + shape_string(B.shape()); });
  Tensor<T> out(A.shape());
  flat(out) = flat(A) * flat(B);
  const int ia = a.id, ib = b.id;
  return push(std::move(out), needs(a) || needs(b),
              [ia, ib](Tape& t, int self) {
                const Tensor<T>& G = t.node_grad(self);
                if (t.nodes_[ia].needs_grad) flat(t.grad_buffer(ia)) += flat(G) * flat(t.val(ib));
                if (t.nodes_[ib].needs_grad) flat(t.grad_buffer(ib)) += flat(G) * flat(t.val(ia));
              },
              "mul");
}

template <class T>
Var Tape<T>::scale(Var a, T s) {
  check(a);
  Tensor<T> out(val(a.id).shape());
  flat(out) = flat(val(a.id)) * s;
  const int ia = a.id;
  return push(std::move(out), needs(a),
              [ia, s](Tape& t, int self) { flat(t.grad_buffer(ia)) += s * flat(t.node_grad(self)); },
              "scale");
}

template <class T>
Var Tape<T>::add_row(Var a, Var row) {
  check(a);
  check(row);
  const Tensor<T>& A = val(a.id);
  const Tensor<T>& R = val(row.id);
  require(R.size() == A.cols(), [&] { return "add_row: row of size " + std::to_string(R.size()) + " vs matrix " +
                                    shape_string(A.shape()); });
  Tensor<T> out = A;
  as_mat(out).rowwise() += ConstMatMap<T>(R.data(), 1, static_cast<Eigen::Index>(R.size())).row(0);
  const int ia = a.id, ir = row.id;
  return push(std::move(out), needs(a) || needs(row),
              [ia, ir](Tape& t, int self) {
                const Tensor<T>& G = t.node_grad(self);
                if (t.nodes_[ia].needs_grad) flat(t.grad_buffer(ia)) += flat(G);
                if (t.nodes_[ir].needs_grad) {
                  Tensor<T>& g = t.grad_buffer(ir);
                  MatMap<T>(g.data(), 1, static_cast<Eigen::Index>(g.size())).row(0) += as_mat(G).colwise().sum();
                }
              },
              "add_row");
}

template <class T>
Var Tape<T>::mul_scalar(Var a, Var s) {
  check(a);
  check(s);
  require(val(s.id).size() == 1, "mul_scalar: scale must hold one element");
  const T sv = val(s.id)[0];
  Tensor<T> out(val(a.id).shape());
  flat(out) = flat(val(a.id)) * sv;
  const int ia = a.id, is = s.id;
  return push(std::move(out), needs(a) || needs(s),
              [ia, is](Tape& t, int self) {
                const Tensor<T>& G = t.node_grad(self);
                const T sv = t.val(is)[0];
                if (t.nodes_[ia].needs_grad) flat(t.grad_buffer(ia)) += sv * flat(G);
                if (t.nodes_[is].needs_grad) {
                  const Tensor<T>& A = t.val(ia);
                  T acc = 0;
                  for (std::size_t i = 0; i < A.size(); ++i) acc += G[i] * A[i];
                  t.grad_buffer(is)[0] += acc;
                }
              },
              "mul_scalar");
}

template <class T>
Var Tape<T>::exp(Var a) {
  check(a);
  Tensor<T> out = val(a.id);
  for (auto& v : out.values()) v = std::exp(v);
  const int ia = a.id;
  return push(std::move(out), needs(a),
              [ia](Tape& t, int self) {
                const Tensor<T>& G = t.node_grad(self);
                const Tensor<T>& Y = t.val(self);
                Tensor<T>& g = t.grad_buffer(ia);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i] * Y[i];
              },
              "exp");
}

template <class T>
Var Tape<T>::gelu(Var a) {
  check(a);
  const auto X = flat(val(a.id));
  Tensor<T> out(val(a.id).shape());
  flat(out) = T(0.5) * X * (T(1) + (kGeluK<T> * (X + T(0.044715) * X.cube())).tanh());
  const int ia = a.id;
  return push(std::move(out), needs(a),
              [ia](Tape& t, int self) {
                const auto X = flat(t.val(ia));
                const Vec<T> th = (kGeluK<T> * (X + T(0.044715) * X.cube())).tanh();
                flat(t.grad_buffer(ia)) +=
                    flat(t.node_grad(self)) *
                    (T(0.5) * (T(1) + th) +
                     T(0.5) * X * (T(1) - th.square()) * kGeluK<T> * (T(1) + T(3) * T(0.044715) * X.square()));
              },
              "gelu");
}

template <class T>
Var Tape<T>::sigmoid(Var a) {
  check(a);
  Tensor<T> out = val(a.id);
  for (auto& v : out.values()) v = sigmoid_value(v);
  const int ia = a.id;
  return push(std::move(out), needs(a),
              [ia](Tape& t, int self) {
                const Tensor<T>& G = t.node_grad(self);
                const Tensor<T>& Y = t.val(self);
                Tensor<T>& g = t.grad_buffer(ia);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i] * Y[i] * (T(1) - Y[i]);
              },
              "sigmoid");
}

template <class T>
Var Tape<T>::softmax_rows(Var a) {
  check(a);
  Tensor<T> out = val(a.id);
  const std::size_t n = out.rows(), m = out.cols();
  for (std::size_t r = 0; r < n; ++r) {
    T* row = out.data() + r * m;
    const T mx = *std::max_element(row, row + m);
    T total = 0;
    for (std::size_t c = 0; c < m; ++c) total += (row[c] = std::exp(row[c] - mx));
    for (std::size_t c = 0; c < m; ++c) row[c] /= total;
  }
  const int ia = a.id;
  return push(std::move(out), needs(a),
              [ia](Tape& t, int self) {
                const Tensor<T>& G = t.node_grad(self);
                const Tensor<T>& Y = t.val(self);
                Tensor<T>& g = t.grad_buffer(ia);
                const std::size_t n = Y.rows(), m = Y.cols();
                for (std::size_t r = 0; r < n; ++r) {
                  T dot = 0;
                  for (std::size_t c = 0; c < m; ++c) dot += G[r * m + c] * Y[r * m + c];
                  for (std::size_t c = 0; c < m; ++c) g[r * m + c] += Y[r * m + c] * (G[r * m + c] - dot);
                }
              },
              "softmax");
}

template <class T>
Var Tape<T>::layer_norm(Var x, Var gamma, Var beta, T eps) {
  check(x);
  check(gamma);
  check(beta);
  const Tensor<T>& X = val(x.id);
  const std::size_t n = X.rows(), m = X.cols();
  require(val(gamma.id).size() == m && val(beta.id).size() == m, [&] { return
          "layer_norm: affine parameters must match feature size " + std::to_string(m); });
  const Tensor<T>& Gm = val(gamma.id);
  const Tensor<T>& Bt = val(beta.id);
  Tensor<T> out(X.shape());
  auto xhat = std::make_shared<RowMat<T>>(n, m);
  auto inv_std = std::make_shared<Vec<T>>(n);
  ConstMatMap<T> Xm(X.data(), n, m);
  const Eigen::Map<const Eigen::Array<T, 1, Eigen::Dynamic>> g_row(Gm.data(), m), b_row(Bt.data(), m);
  const Vec<T> mu = Xm.rowwise().mean().array();
  xhat->array() = Xm.array().colwise() - mu;
  *inv_std = (xhat->array().square().rowwise().sum() / T(m) + eps).rsqrt();
  xhat->array().colwise() *= *inv_std;
  MatMap<T>(out.data(), n, m).array() = (xhat->array().rowwise() * g_row).rowwise() + b_row;
  const int ix = x.id, ig = gamma.id, ib = beta.id;
  return push(std::move(out), needs(x) || needs(gamma) || needs(beta),
              [ix, ig, ib, xhat, inv_std](Tape& t, int self) {
                const Tensor<T>& G = t.node_grad(self);
                const Tensor<T>& Gm = t.val(ig);
                const std::size_t m = Gm.size();
                const std::size_t n = G.size() / m;
                ConstMatMap<T> Gmat(G.data(), n, m);
                using RowArr = Eigen::Map<Eigen::Array<T, 1, Eigen::Dynamic>>;
                if (t.nodes_[ig].needs_grad)
                  RowArr(t.grad_buffer(ig).data(), m) += (Gmat.array() * xhat->array()).colwise().sum();
                if (t.nodes_[ib].needs_grad) RowArr(t.grad_buffer(ib).data(), m) += Gmat.array().colwise().sum();
                if (t.nodes_[ix].needs_grad) {
                  const Eigen::Map<const Eigen::Array<T, 1, Eigen::Dynamic>> g_row(Gm.data(), m);
                  const RowMat<T> dh = (Gmat.array().rowwise() * g_row).matrix();
                  const Vec<T> mean_dh = dh.array().rowwise().sum() / T(m);
                  const Vec<T> mean_dh_h = (dh.array() * xhat->array()).rowwise().sum() / T(m);
                  MatMap<T>(t.grad_buffer(ix).data(), n, m).array() +=
                      ((dh.array().colwise() - mean_dh) - xhat->array().colwise() * mean_dh_h).colwise() * *inv_std;
                }
              },
              "layer_norm");
}

template <class T>
Var Tape<T>::attention(Var q, Var k, Var v, const AttentionLayout& layout, int heads) {
  check(q);
  check(k);
  check(v);
  const Tensor<T>& Q = val(q.id);
  const Tensor<T>& K = val(k.id);
  const Tensor<T>& V = val(v.id);
  const std::size_t d = Q.cols();
  require(heads > 0 && d % static_cast<std::size_t>(heads) == 0, [&] { return
          "attention: model dimension " + std::to_string(d) + " not divisible by " + std::to_string(heads) + " heads"; });
  require(K.cols() == d && V.cols() == d, "attention: query/key/value widths differ");
  require(K.rows() == V.rows(), "attention: key and value row counts differ");
  const int batch = layout.batch();
  require(batch >= 1 && layout.key_offsets.size() == layout.query_offsets.size(), "attention: malformed layout");
  require(layout.query_offsets.back() == static_cast<int>(Q.rows()) &&
              layout.key_offsets.back() == static_cast<int>(K.rows()),
          "attention: layout does not cover all rows");
  require(layout.key_mask.empty() || layout.key_mask.size() == K.rows(), "attention: key mask length mismatch");

  const std::size_t dh = d / static_cast<std::size_t>(heads);
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  // Probability blocks: for each (segment, head), nq x nk.
  auto probs = std::make_shared<std::vector<T, Eigen::aligned_allocator<T>>>();
  auto block_offsets = std::make_shared<std::vector<std::size_t>>();
  std::size_t total = 0;
  for (int b = 0; b < batch; ++b) {
    const std::size_t nq = layout.query_offsets[b + 1] - layout.query_offsets[b];
    const std::size_t nk = layout.key_offsets[b + 1] - layout.key_offsets[b];
    require(nk > 0 || nq == 0, "attention: segment with queries but no keys");
    for (int h = 0; h < heads; ++h) {
      block_offsets->push_back(total);
      total += nq * nk;
    }
  }
  probs->resize(total);
  Tensor<T> out(Shape{Q.rows(), d});
  const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(d));
  for (int b = 0; b < batch; ++b) {
    const int q0 = layout.query_offsets[b], k0 = layout.key_offsets[b];
    const int nq = layout.query_offsets[b + 1] - q0;
    const int nk = layout.key_offsets[b + 1] - k0;
    if (nq == 0) continue;
    bool any_visible = layout.key_mask.empty();
    for (int j = 0; j < nk && !any_visible; ++j) any_visible = layout.key_mask[k0 + j] == 0;
    if (!any_visible) throw DomainError("attention: every key position is masked in sequence " + std::to_string(b));
    for (int h = 0; h < heads; ++h) {
      ConstStridedMap<T> Qh(Q.data() + q0 * d + h * dh, nq, dh, stride);
      ConstStridedMap<T> Kh(K.data() + k0 * d + h * dh, nk, dh, stride);
      ConstStridedMap<T> Vh(V.data() + k0 * d + h * dh, nk, dh, stride);
      MatMap<T> P(probs->data() + (*block_offsets)[b * heads + h], nq, nk);
      P.noalias() = (Qh * Kh.transpose()) * scale;
      if (!layout.key_mask.empty())
        for (int j = 0; j < nk; ++j)
          if (layout.key_mask[k0 + j]) P.col(j).setConstant(-std::numeric_limits<T>::infinity());
      P.array().colwise() -= P.array().rowwise().maxCoeff();
      P.array() = P.array().exp();
      P.array().colwise() /= P.array().rowwise().sum();
      StridedMap<T> Oh(out.data() + q0 * d + h * dh, nq, dh, stride);
      Oh.noalias() = P * Vh;
    }
  }
  const int iq = q.id, ik = k.id, iv = v.id;
  return push(std::move(out), needs(q) || needs(k) || needs(v),
              [iq, ik, iv, layout, heads, probs, block_offsets, scale](Tape& t, int self) {
                const Tensor<T>& G = t.node_grad(self);
                const Tensor<T>& Q = t.val(iq);
                const Tensor<T>& K = t.val(ik);
                const Tensor<T>& V = t.val(iv);
                const std::size_t d = Q.cols();
                const std::size_t dh = d / static_cast<std::size_t>(heads);
                const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(d));
                const bool gq = t.nodes_[iq].needs_grad, gk = t.nodes_[ik].needs_grad, gv = t.nodes_[iv].needs_grad;
                T* dQ = gq ? t.grad_buffer(iq).data() : nullptr;
                T* dK = gk ? t.grad_buffer(ik).data() : nullptr;
                T* dV = gv ? t.grad_buffer(iv).data() : nullptr;
                RowMat<T> dP, dS;
                for (int b = 0; b < layout.batch(); ++b) {
                  const int q0 = layout.query_offsets[b], k0 = layout.key_offsets[b];
                  const int nq = layout.query_offsets[b + 1] - q0;
                  const int nk = layout.key_offsets[b + 1] - k0;
                  if (nq == 0) continue;
                  for (int h = 0; h < heads; ++h) {
                    ConstMatMap<T> P(probs->data() + (*block_offsets)[b * heads + h], nq, nk);
                    ConstStridedMap<T> Gh(G.data() + q0 * d + h * dh, nq, dh, stride);
                    ConstStridedMap<T> Qh(Q.data() + q0 * d + h * dh, nq, dh, stride);
                    ConstStridedMap<T> Kh(K.data() + k0 * d + h * dh, nk, dh, stride);
                    ConstStridedMap<T> Vh(V.data() + k0 * d + h * dh, nk, dh, stride);
                    if (gv) {
                      StridedMap<T> dVh(dV + k0 * d + h * dh, nk, dh, stride);
                      dVh.noalias() += P.transpose() * Gh;
                    }
                    if (!gq && !gk) continue;
                    dP.noalias() = Gh * Vh.transpose();
                    dS.resize(nq, nk);
                    for (int i = 0; i < nq; ++i) {
                      const T dot = (dP.row(i).array() * P.row(i).array()).sum();
                      dS.row(i) = P.row(i).array() * (dP.row(i).array() - dot);
                    }
                    dS *= scale;
                    if (gq) {
                      StridedMap<T> dQh(dQ + q0 * d + h * dh, nq, dh, stride);
                      dQh.noalias() += dS * Kh;
                    }
                    if (gk) {
                      StridedMap<T> dKh(dK + k0 * d + h * dh, nk, dh, stride);
                      dKh.noalias() += dS.transpose() * Qh;
                    }
                  }
                }
              },
              "attention");
}

template <class T>
Var Tape<T>::gru_cell(Var x, Var h, Var wx, Var wh, Var bx, Var bh) {
  for (Var v : {x, h, wx, wh, bx, bh}) check(v);
  const Tensor<T>& X = val(x.id);
  const Tensor<T>& H = val(h.id);
  const Tensor<T>& WX = val(wx.id);
  const Tensor<T>& WH = val(wh.id);
  const std::size_t hidden = H.cols();
  const std::size_t n = X.rows();
  require(H.rows() == n, "gru_cell: input and state batch sizes differ");
  require(WX.rank() == 2 && WX.shape()[0] == X.cols() && WX.shape()[1] == 3 * hidden,
          "gru_cell: input weight must be [in, 3*hidden]");
  require(WH.rank() == 2 && WH.shape()[0] == hidden && WH.shape()[1] == 3 * hidden,
          "gru_cell: state weight must be [hidden, 3*hidden]");
  require(val(bx.id).size() == 3 * hidden && val(bh.id).size() == 3 * hidden, "gru_cell: bias size mismatch");
  // Pre-activations for the input and state paths.
  auto xa = std::make_shared<Tensor<T>>(Shape{n, 3 * hidden});
  auto ha = std::make_shared<Tensor<T>>(Shape{n, 3 * hidden});
  as_mat(*xa).noalias() = as_mat(X) * as_mat(WX);
  as_mat(*ha).noalias() = as_mat(H) * as_mat(WH);
  const Tensor<T>& BX = val(bx.id);
  const Tensor<T>& BH = val(bh.id);
  auto gates = std::make_shared<Tensor<T>>(Shape{n, 3 * hidden});  // r, z, n
  Tensor<T> out(Shape{n, hidden});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < hidden; ++c) {
      T* xr = xa->data() + r * 3 * hidden;
      T* hr = ha->data() + r * 3 * hidden;
      for (std::size_t g = 0; g < 3; ++g) {
        xr[g * hidden + c] += BX[g * hidden + c];
        hr[g * hidden + c] += BH[g * hidden + c];
      }
      const T rg = sigmoid_value(xr[c] + hr[c]);
      const T zg = sigmoid_value(xr[hidden + c] + hr[hidden + c]);
      const T ng = std::tanh(xr[2 * hidden + c] + rg * hr[2 * hidden + c]);
      gates->at(r, c) = rg;
      gates->at(r, hidden + c) = zg;
      gates->at(r, 2 * hidden + c) = ng;
      out.at(r, c) = (T(1) - zg) * ng + zg * H.at(r, c);
    }
  }
  const int ix = x.id, ih = h.id, iwx = wx.id, iwh = wh.id, ibx = bx.id, ibh = bh.id;
  return push(std::move(out), needs(x) || needs(h) || needs(wx) || needs(wh) || needs(bx) || needs(bh),
              [ix, ih, iwx, iwh, ibx, ibh, ha, gates](Tape& t, int self) {
                const Tensor<T>& G = t.node_grad(self);
                const Tensor<T>& X = t.val(ix);
                const Tensor<T>& H = t.val(ih);
                const std::size_t hidden = H.cols();
                const std::size_t n = H.rows();
                Tensor<T> gx(Shape{n, 3 * hidden});
                Tensor<T> gh(Shape{n, 3 * hidden});
                const bool need_h = t.nodes_[ih].needs_grad;
                Tensor<T>* dH = need_h ? &t.grad_buffer(ih) : nullptr;
                for (std::size_t r = 0; r < n; ++r) {
                  for (std::size_t c = 0; c < hidden; ++c) {
                    const T rg = gates->at(r, c), zg = gates->at(r, hidden + c), ng = gates->at(r, 2 * hidden + c);
                    const T dout = G.at(r, c);
                    const T dn = dout * (T(1) - zg);
                    const T dz = dout * (H.at(r, c) - ng);
                    if (dH) dH->at(r, c) += dout * zg;
                    const T dan = dn * (T(1) - ng * ng);
                    const T hn = ha->at(r, 2 * hidden + c);
                    const T dr = dan * hn;
                    const T daz = dz * zg * (T(1) - zg);
                    const T dar = dr * rg * (T(1) - rg);
                    gx.at(r, c) = dar;
                    gx.at(r, hidden + c) = daz;
                    gx.at(r, 2 * hidden + c) = dan;
                    gh.at(r, c) = dar;
                    gh.at(r, hidden + c) = daz;
                    gh.at(r, 2 * hidden + c) = dan * rg;
                  }
                }
                if (t.nodes_[ix].needs_grad)
                  as_mat(t.grad_buffer(ix)).noalias() += as_mat(gx) * as_mat(t.val(iwx)).transpose();
                if (dH) as_mat(*dH).noalias() += as_mat(gh) * as_mat(t.val(iwh)).transpose();
                if (t.nodes_[iwx].needs_grad) as_mat(t.grad_buffer(iwx)).noalias() += as_mat(X).transpose() * as_mat(gx);
                if (t.nodes_[iwh].needs_grad) as_mat(t.grad_buffer(iwh)).noalias() += as_mat(H).transpose() * as_mat(gh);
                if (t.nodes_[ibx].needs_grad) {
                  Tensor<T>& g = t.grad_buffer(ibx);
                  MatMap<T>(g.data(), 1, static_cast<Eigen::Index>(g.size())).row(0) += as_mat(gx).colwise().sum();
                }
                if (t.nodes_[ibh].needs_grad) {
                  Tensor<T>& g = t.grad_buffer(ibh);
                  MatMap<T>(g.data(), 1, static_cast<Eigen::Index>(g.size())).row(0) += as_mat(gh).colwise().sum();
                }
              },
              "gru_cell");
}

template <class T>
Var Tape<T>::gather_rows(Var table, std::vector<int> rows) {
  check(table);
  const Tensor<T>& W = val(table.id);
  const std::size_t m = W.cols();
  const int n = static_cast<int>(W.rows());
  Tensor<T> out(Shape{rows.size(), m});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= n)
      throw ShapeError("gather_rows: index " + std::to_string(rows[r]) + " outside [0, " + std::to_string(n) + ")");
    std::copy_n(W.data() + rows[r] * m, m, out.data() + r * m);
  }
  const int it = table.id;
  return push(std::move(out), needs(table),
              [it, rows = std::move(rows)](Tape& t, int self) {
                const Tensor<T>& G = t.node_grad(self);
                Tensor<T>& g = t.grad_buffer(it);
                const std::size_t m = G.cols();
                for (std::size_t r = 0; r < rows.size(); ++r) {
                  T* dst = g.data() + rows[r] * m;
                  const T* src = G.data() + r * m;
                  for (std::size_t c = 0; c < m; ++c) dst[c] += src[c];
                }
              },
              "gather_rows");
}

template <class T>
Var Tape<T>::concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows: nothing to concatenate");
  std::size_t rows = 0;
  const std::size_t m = val(parts[0].id).cols();
  bool any_grad = false;
  std::vector<int> ids;
  for (Var p : parts) {
    check(p);
    require(val(p.id).cols() == m, "concat_rows: column counts differ");
    rows += val(p.id).rows();
    any_grad = any_grad || needs(p);
    ids.push_back(p.id);
  }
  Tensor<T> out(Shape{rows, m});
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor<T>& P = val(p.id);
    std::copy(P.data(), P.data() + P.size(), out.data() + offset);
    offset += P.size();
  }
  return push(std::move(out), any_grad,
              [ids = std::move(ids)](Tape& t, int self) {
                const Tensor<T>& G = t.node_grad(self);
                std::size_t offset = 0;
                for (int id : ids) {
                  const std::size_t n = t.val(id).size();
                  if (t.nodes_[id].needs_grad) {
                    Tensor<T>& g = t.grad_buffer(id);
                    for (std::size_t i = 0; i < n; ++i) g[i] += G[offset + i];
                  }
                  offset += n;
                }
              },
              "concat_rows");
}

template <class T>
Var Tape<T>::concat_cols(Var a, Var b) {
  check(a);
  check(b);
  const Tensor<T>& A = val(a.id);
  const Tensor<T>& B = val(b.id);
  require(A.rows() == B.rows(), "concat_cols: row counts differ");
  const std::size_t n = A.rows(), ca = A.cols(), cb = B.cols();
  Tensor<T> out(Shape{n, ca + cb});
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(A.data() + r * ca, ca, out.data() + r * (ca + cb));
    std::copy_n(B.data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
  }
  const int ia = a.id, ib = b.id;
  return push(std::move(out), needs(a) || needs(b),
              [ia, ib](Tape& t, int self) {
                const Tensor<T>& G = t.node_grad(self);
                const std::size_t ca = t.val(ia).cols(), cb = t.val(ib).cols(), n = G.rows();
                if (t.nodes_[ia].needs_grad) {
                  Tensor<T>& g = t.grad_buffer(ia);
                  for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t c = 0; c < ca; ++c) g[r * ca + c] += G[r * (ca + cb) + c];
                }
                if (t.nodes_[ib].needs_grad) {
                  Tensor<T>& g = t.grad_buffer(ib);
                  for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t c = 0; c < cb; ++c) g[r * cb + c] += G[r * (ca + cb) + ca + c];
                }
              },
              "concat_cols");
}

template <class T>
Var Tape<T>::dropout(Var a, T p) {
  check(a);
  if (!options_.train || p <= T(0)) return a;
  if (p >= T(1)) throw DomainError("dropout probability must be < 1");
  const Tensor<T>& A = val(a.id);
  auto mask = std::make_shared<std::vector<T>>(A.size());
  const T keep_scale = T(1) / (T(1) - p);
  for (auto& m : *mask) m = rng_.bernoulli(static_cast<double>(p)) ? T(0) : keep_scale;
  Tensor<T> out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= (*mask)[i];
  const int ia = a.id;
  return push(std::move(out), needs(a),
              [ia, mask](Tape& t, int self) {
                const Tensor<T>& G = t.node_grad(self);
                Tensor<T>& g = t.grad_buffer(ia);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i] * (*mask)[i];
              },
              "dropout");
}

template <class T>
Var Tape<T>::l2_normalize_rows(Var a, T eps) {
  check(a);
  Tensor<T> out = val(a.id);
  const std::size_t n = out.rows(), m = out.cols();
  auto norms = std::make_shared<std::vector<T>>(n);
  for (std::size_t r = 0; r < n; ++r) {
    T s = 0;
    for (std::size_t c = 0; c < m; ++c) s += out[r * m + c] * out[r * m + c];
    const T norm = std::max(std::sqrt(s), eps);
    (*norms)[r] = norm;
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] /= norm;
  }
  const int ia = a.id;
  return push(std::move(out), needs(a),
              [ia, norms](Tape& t, int self) {
                const Tensor<T>& G = t.node_grad(self);
                const Tensor<T>& Y = t.val(self);
                Tensor<T>& g = t.grad_buffer(ia);
                const std::size_t n = Y.rows(), m = Y.cols();
                for (std::size_t r = 0; r < n; ++r) {
                  T dot = 0;
                  for (std::size_t c = 0; c < m; ++c) dot += Y[r * m + c] * G[r * m + c];
                  for (std::size_t c = 0; c < m; ++c)
                    g[r * m + c] += (G[r * m + c] - Y[r * m + c] * dot) / (*norms)[r];
                }
              },
              "l2_normalize");
}

template <class T>
Var Tape<T>::segment_mean(Var a, std::vector<int> offsets) {
  check(a);
  const Tensor<T>& A = val(a.id);
  require(offsets.size() >= 2 && offsets.front() == 0 && offsets.back() == static_cast<int>(A.rows()),
          "segment_mean: offsets must span all rows");
  const std::size_t m = A.cols();
  const std::size_t b = offsets.size() - 1;
  Tensor<T> out(Shape{b, m});
  for (std::size_t s = 0; s < b; ++s) {
    const int len = offsets[s + 1] - offsets[s];
    require(len > 0, "segment_mean: empty segment");
    for (int r = offsets[s]; r < offsets[s + 1]; ++r)
      for (std::size_t c = 0; c < m; ++c) out[s * m + c] += A[r * m + c];
    for (std::size_t c = 0; c < m; ++c) out[s * m + c] /= T(len);
  }
  const int ia = a.id;
  return push(std::move(out), needs(a),
              [ia, offsets = std::move(offsets)](Tape& t, int self) {
                const Tensor<T>& G = t.node_grad(self);
                Tensor<T>& g = t.grad_buffer(ia);
                const std::size_t m = G.cols();
                for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
                  const T inv = T(1) / T(offsets[s + 1] - offsets[s]);
                  for (int r = offsets[s]; r < offsets[s + 1]; ++r)
                    for (std::size_t c = 0; c < m; ++c) g[r * m + c] += G[s * m + c] * inv;
                }
              },
              "segment_mean");
}

template <class T>
Var Tape<T>::reshape(Var a, Shape shape) {
  check(a);
  Tensor<T> out = val(a.id).reshaped(std::move(shape));
  const int ia = a.id;
  return push(std::move(out), needs(a),
              [ia](Tape& t, int self) {
                const Tensor<T>& G = t.node_grad(self);
                Tensor<T>& g = t.grad_buffer(ia);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i];
              },
              "reshape");
}

template <class T>
Var Tape<T>::sum(Var a) {
  check(a);
  T s = 0;
  for (T v : val(a.id).values()) s += v;
  const int ia = a.id;
  return push(Tensor<T>::scalar(s), needs(a),
              [ia](Tape& t, int self) {
                const T g0 = t.node_grad(self)[0];
                Tensor<T>& g = t.grad_buffer(ia);
                for (auto& v : g.values()) v += g0;
              },
              "sum");
}

template <class T>
Var Tape<T>::mean(Var a) {
  check(a);
  const std::size_t n = val(a.id).size();
  require(n > 0, "mean of empty tensor");
  return scale(sum(a), T(1) / T(n));
}

template <class T>
Var Tape<T>::mse(Var prediction, Var target) {
  check(prediction);
  check(target);
  const Tensor<T>& P = val(prediction.id);
  const Tensor<T>& Y = val(target.id);
  require(P.size() == Y.size() && P.size() > 0, [&] { return
          "mse: shape mismatch " + shape_string(P.shape()) + " vs " + shape_string(Y.shape()); });
  T s = 0;
  for (std::size_t i = 0; i < P.size(); ++i) s += (P[i] - Y[i]) * (P[i] - Y[i]);
  const T inv_n = T(1) / T(P.size());
  const int ip = prediction.id, iy = target.id;
  return push(Tensor<T>::scalar(s * inv_n), needs(prediction) || needs(target),
              [ip, iy, inv_n](Tape& t, int self) {
                const T g0 = t.node_grad(self)[0];
                const Tensor<T>& P = t.val(ip);
                const Tensor<T>& Y = t.val(iy);
                if (t.nodes_[ip].needs_grad) {
                  Tensor<T>& g = t.grad_buffer(ip);
                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += T(2) * inv_n * g0 * (P[i] - Y[i]);
                }
                if (t.nodes_[iy].needs_grad) {
                  Tensor<T>& g = t.grad_buffer(iy);
                  for (std::size_t i = 0; i < g.size(); ++i) g[i] -= T(2) * inv_n * g0 * (P[i] - Y[i]);
                }
              },
              "mse");
}

template <class T>
Var Tape<T>::cross_entropy_rows(Var logits, std::vector<int> targets) {
  check(logits);
  const Tensor<T>& L = val(logits.id);
  const std::size_t n = L.rows(), m = L.cols();
  require(targets.size() == n, "cross_entropy_rows: one target per row required");
  auto probs = std::make_shared<std::vector<T>>(L.size());
  T loss = 0;
  for (std::size_t r = 0; r < n; ++r) {
    require(targets[r] >= 0 && static_cast<std::size_t>(targets[r]) < m, "cross_entropy_rows: target out of range");
    const T* row = L.data() + r * m;
    const T mx = *std::max_element(row, row + m);
    T s = 0;
    for (std::size_t c = 0; c < m; ++c) s += ((*probs)[r * m + c] = std::exp(row[c] - mx));
    for (std::size_t c = 0; c < m; ++c) (*probs)[r * m + c] /= s;
    loss += -(row[targets[r]] - mx - std::log(s));
  }
  loss /= T(n);
  const int il = logits.id;
  return push(Tensor<T>::scalar(loss), needs(logits),
              [il, probs, targets = std::move(targets)](Tape& t, int self) {
                const T g0 = t.node_grad(self)[0];
                Tensor<T>& g = t.grad_buffer(il);
                const std::size_t n = targets.size(), m = g.cols();
                const T inv_n = T(1) / T(n);
                for (std::size_t r = 0; r < n; ++r)
                  for (std::size_t c = 0; c < m; ++c) {
                    const T onehot = static_cast<int>(c) == targets[r] ? T(1) : T(0);
                    g[r * m + c] += g0 * inv_n * ((*probs)[r * m + c] - onehot);
                  }
              },
              "cross_entropy");
}

template <class T>
Var Tape<T>::transpose(Var a) {
  check(a);
  const Tensor<T>& A = val(a.id);
  require(A.rank() == 2, "transpose: expects a matrix");
  Tensor<T> out(Shape{A.cols(), A.rows()});
  as_mat(out) = as_mat(A).transpose();
  const int ia = a.id;
  return push(std::move(out), needs(a),
              [ia](Tape& t, int self) {
                as_mat(t.grad_buffer(ia)) += as_mat(t.node_grad(self)).transpose();
              },
              "transpose");
}

template <class T>
void Tape<T>::backward(Var output, const Tensor<T>& output_grad) {
  check(output);
  if (consumed_) throw DomainError("tape already consumed by backward()");
  if (output_grad.size() != val(output.id).size()) {
    throw ShapeError("backward: gradient shape " + shape_string(output_grad.shape()) + " does not match output " +
                     shape_string(val(output.id).shape()));
  }
  consumed_ = true;
  if (!nodes_[output.id].needs_grad) return;
  Tensor<T>& g = grad_buffer(output.id);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += output_grad[i];
  for (int id = output.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.backward && n.has_grad) n.backward(*this, id);
  }
}

template <class T>
void Tape<T>::backward(Var scalar_output) {
  check(scalar_output);
  if (val(scalar_output.id).size() != 1) throw ShapeError("backward() without gradient needs a scalar output");
  backward(scalar_output, Tensor<T>::scalar(T(1)));
}

template class Tape<float>;
template class Tape<double>;

}  // namespace promo::nn
