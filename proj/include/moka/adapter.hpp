#pragma once

#include <utility>
#include <vector>

#include "moka/core.hpp"
#include "moka/rng.hpp"

namespace moka {

// Geometry of one factor pair: A is (m_a x n_a), B is (m_b x n_b).
struct PairShape {
  Index m_a = 0;
  Index n_a = 0;
  Index m_b = 0;
  Index n_b = 0;
  bool identity_a = false;

  friend bool operator==(const PairShape&, const PairShape&) = default;
};

// One (A, B) Kronecker factor pair. With identity_a set, A is an implicit
// identity of order a_dim and carries no trainable entries.
template <class S>
struct KronFactorPairT {
  MatrixX<S> a;  // empty when identity_a
  MatrixX<S> b;
  Index a_dim = 0;
  bool identity_a = false;

  static KronFactorPairT dense(MatrixX<S> a_in, MatrixX<S> b_in) {
    if (a_in.rows() < 1 || a_in.cols() < 1 || b_in.rows() < 1 || b_in.cols() < 1) {
      throw ShapeError("factor pair: all dims must be >= 1");
    }
    KronFactorPairT p;
    p.a = std::move(a_in);
    p.b = std::move(b_in);
    return p;
  }

  static KronFactorPairT identity(Index a_order, MatrixX<S> b_in) {
    if (a_order < 1 || b_in.rows() < 1 || b_in.cols() < 1) {
      throw ShapeError("factor pair: all dims must be >= 1");
    }
    KronFactorPairT p;
    p.b = std::move(b_in);
    p.a_dim = a_order;
    p.identity_a = true;
    return p;
  }

  Index m_a() const { return identity_a ? a_dim : a.rows(); }
  Index n_a() const { return identity_a ? a_dim : a.cols(); }
  Index m_b() const { return b.rows(); }
  Index n_b() const { return b.cols(); }
  Index in_capacity() const { return n_a() * n_b(); }
  Index out_capacity() const { return m_a() * m_b(); }
  Index trainable_params() const { return (identity_a ? 0 : a.size()) + b.size(); }

  MatrixX<S> a_materialized() const {
    return identity_a ? MatrixX<S>(MatrixX<S>::Identity(a_dim, a_dim)) : a;
  }

  PairShape shape() const { return {m_a(), n_a(), m_b(), n_b(), identity_a}; }
};

// Gated mixture of r factor pairs targeting an (out_dim x in_dim) layer.
// With gated unset the mixture weights are fixed uniform 1/r and the
// logits receive no gradient (the ungated ablation).
template <class S>
struct MixtureAdapterT {
  std::vector<KronFactorPairT<S>> pairs;
  VectorX<S> gate_logits;
  Index out_dim = 0;  // m
  Index in_dim = 0;   // n
  bool gated = true;

  Index pair_count() const { return static_cast<Index>(pairs.size()); }
};

using KronFactorPair = KronFactorPairT<double>;
using MixtureAdapter = MixtureAdapterT<double>;

namespace detail {

template <class S>
void check_pair_dims(const KronFactorPairT<S>& pair, Index n, Index m, Index pair_index) {
  const auto where = pair_index < 0 ? std::string("pair") : "pair " + std::to_string(pair_index);
  if (pair.in_capacity() < n) {
    throw ShapeError(where + ": n_a*n_b = " + std::to_string(pair.in_capacity()) +
                     " < input dim n = " + std::to_string(n));
  }
  if (pair.out_capacity() < m) {
    throw ShapeError(where + ": m_a*m_b = " + std::to_string(pair.out_capacity()) +
                     " < output dim m = " + std::to_string(m));
  }
}

// Column-major view of a contiguous vector as an (rows x cols) matrix.
template <class S>
auto as_reshaped(const VectorX<S>& x, Index rows, Index cols) {
  return Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>>(x.data(), rows, cols);
}

}  // namespace detail

template <class S>
void validate_adapter(const MixtureAdapterT<S>& adapter) {
  if (adapter.pairs.empty()) throw ShapeError("adapter: needs at least one factor pair");
  if (adapter.out_dim < 1 || adapter.in_dim < 1) throw ShapeError("adapter: target dims must be >= 1");
  if (adapter.gate_logits.size() != adapter.pair_count()) {
    throw ShapeError("adapter: " + std::to_string(adapter.gate_logits.size()) +
                     " gate logits for " + std::to_string(adapter.pair_count()) + " pairs");
  }
  for (Index i = 0; i < adapter.pair_count(); ++i) {
    detail::check_pair_dims(adapter.pairs[i], adapter.in_dim, adapter.out_dim, i);
  }
}

// Mixture weights via max-shifted softmax of the gate logits. Scalar
// std::exp so that deeply negative shifted logits underflow to exact zero.
template <class S>
VectorX<S> gates(const MixtureAdapterT<S>& adapter) {
  const Index r = adapter.pair_count();
  if (!adapter.gated) return VectorX<S>::Constant(r, S(1) / static_cast<S>(r));
  const S shift = adapter.gate_logits.maxCoeff();
  VectorX<S> w(r);
  for (Index i = 0; i < r; ++i) w[i] = std::exp(adapter.gate_logits[i] - shift);
  return w / w.sum();
}

// One pair applied to x: pad x to n_a*n_b, reshape to (n_b x n_a),
// multiply B * X * A^T (B * X when A is an implicit identity), stack
// columns, truncate to m.
template <class S>
VectorX<S> apply_pair(const KronFactorPairT<S>& pair, const VectorX<S>& x, Index n, Index m) {
  if (x.size() != n) {
    throw ShapeError("apply_pair: input length " + std::to_string(x.size()) + " != n = " +
                     std::to_string(n));
  }
  detail::check_pair_dims(pair, n, m, -1);
  const VectorX<S> padded = pad_vector(x, pair.in_capacity());
  const auto reshaped = detail::as_reshaped(padded, pair.n_b(), pair.n_a());
  MatrixX<S> bx = pair.b * reshaped;
  MatrixX<S> product = pair.identity_a ? std::move(bx) : MatrixX<S>(bx * pair.a.transpose());
  return truncate_vector(vec_matrix(product), m);
}

template <class S>
VectorX<S> apply_mixture(const MixtureAdapterT<S>& adapter, const VectorX<S>& x) {
  if (x.size() != adapter.in_dim) {
    throw ShapeError("apply_mixture: input length " + std::to_string(x.size()) + " != n = " +
                     std::to_string(adapter.in_dim));
  }
  const VectorX<S> alpha = gates(adapter);
  VectorX<S> out = VectorX<S>::Zero(adapter.out_dim);
  for (Index i = 0; i < adapter.pair_count(); ++i) {
    detail::check_pair_dims(adapter.pairs[i], adapter.in_dim, adapter.out_dim, i);
    out += alpha[i] * apply_pair(adapter.pairs[i], x, adapter.in_dim, adapter.out_dim);
  }
  return out;
}

// Frozen layer plus residual update: w_frozen * x + mixture(x).
template <class S>
VectorX<S> adapted_forward(const MatrixX<S>& w_frozen, const MixtureAdapterT<S>& adapter,
                           const VectorX<S>& x) {
  if (w_frozen.rows() != adapter.out_dim || w_frozen.cols() != adapter.in_dim) {
    throw ShapeError("adapted_forward: frozen weight is " +
                     shape_str(w_frozen.rows(), w_frozen.cols()) + " but adapter targets " +
                     shape_str(adapter.out_dim, adapter.in_dim));
  }
  return w_frozen * x + apply_mixture(adapter, x);
}

// The dense (m x n) update this adapter realizes: sum of gate-weighted
// upper-left sub-blocks of the explicit Kronecker products. Matches
// apply_mixture under the pad/truncate semantics for every input.
template <class S>
MatrixX<S> materialize_delta(const MixtureAdapterT<S>& adapter,
                             std::int64_t entry_cap = kDefaultKronEntryCap) {
  if (static_cast<std::int64_t>(adapter.out_dim) * adapter.in_dim > entry_cap) {
    throw SizeCapError("materialize_delta: " + shape_str(adapter.out_dim, adapter.in_dim) +
                       " exceeds the entry cap " + std::to_string(entry_cap));
  }
  const VectorX<S> alpha = gates(adapter);
  MatrixX<S> delta = MatrixX<S>::Zero(adapter.out_dim, adapter.in_dim);
  for (Index i = 0; i < adapter.pair_count(); ++i) {
    const auto& pair = adapter.pairs[i];
    detail::check_pair_dims(pair, adapter.in_dim, adapter.out_dim, i);
    const MatrixX<S> full = kron_explicit<S>(pair.a_materialized(), pair.b, entry_cap);
    delta += alpha[i] * full.topLeftCorner(adapter.out_dim, adapter.in_dim);
  }
  return delta;
}

// Zero-update start: B_i = 0 so the adapted layer equals the frozen one at
// step 0; dense A_i entries are N(0, 1/n_a); gate logits start at 0.
template <class S = double>
MixtureAdapterT<S> make_mixture_adapter(const std::vector<PairShape>& shapes, Index m, Index n,
                                        SplitRng& rng, bool gated = true) {
  MixtureAdapterT<S> adapter;
  adapter.out_dim = m;
  adapter.in_dim = n;
  adapter.gated = gated;
  adapter.gate_logits = VectorX<S>::Zero(static_cast<Index>(shapes.size()));
  for (const PairShape& shape : shapes) {
    if (shape.identity_a) {
      if (shape.m_a != shape.n_a) throw ShapeError("identity factor must be square");
      adapter.pairs.push_back(KronFactorPairT<S>::identity(
          shape.n_a, MatrixX<S>::Zero(shape.m_b, shape.n_b)));
    } else {
      const double scale = 1.0 / std::sqrt(static_cast<double>(shape.n_a));
      MatrixX<S> a = (rng.gaussian_matrix(shape.m_a, shape.n_a) * scale).template cast<S>();
      adapter.pairs.push_back(
          KronFactorPairT<S>::dense(std::move(a), MatrixX<S>::Zero(shape.m_b, shape.n_b)));
    }
  }
  validate_adapter(adapter);
  return adapter;
}

// Same pair with the implicit identity replaced by an explicit identity
// matrix; used to cross-check the fast path.
template <class S>
KronFactorPairT<S> with_explicit_identity(const KronFactorPairT<S>& pair) {
  if (!pair.identity_a) return pair;
  return KronFactorPairT<S>::dense(MatrixX<S>::Identity(pair.a_dim, pair.a_dim), pair.b);
}

}  // namespace moka
