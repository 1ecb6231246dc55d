#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>

#include "moka/types.hpp"

namespace moka {

// Explicit Kronecker materializations beyond this many entries are refused.
inline constexpr std::int64_t kDefaultKronEntryCap = std::int64_t{1} << 24;

template <class S>
MatrixX<S> matmul(const MatrixX<S>& a, const MatrixX<S>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.rows(), a.cols()) + " * " +
                     shape_str(b.rows(), b.cols()));
  }
  return a * b;
}

// R_{rows,cols}: fills column by column, the vec convention of the
// Kronecker matvec identity used throughout.
template <class S>
MatrixX<S> reshape_vec_to_matrix(const VectorX<S>& x, Index rows, Index cols) {
  if (rows < 1 || cols < 1 || x.size() != rows * cols) {
    throw ShapeError("reshape: vector of length " + std::to_string(x.size()) +
                     " does not fill a " + shape_str(rows, cols) + " matrix");
  }
  return Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>>(x.data(), rows, cols);
}

// V: stacks columns into a single vector; inverse of reshape_vec_to_matrix.
template <class S>
VectorX<S> vec_matrix(const MatrixX<S>& m) {
  VectorX<S> out(m.size());
  Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>>(out.data(), m.rows(), m.cols()) = m;
  return out;
}

// Block-matrix Kronecker product: block (i,j) is a(i,j) * b. This is the
// ground-truth oracle for the reformulated apply path.
template <class S>
MatrixX<S> kron_explicit(const MatrixX<S>& a, const MatrixX<S>& b,
                         std::int64_t entry_cap = kDefaultKronEntryCap) {
  const std::int64_t rows = static_cast<std::int64_t>(a.rows()) * b.rows();
  const std::int64_t cols = static_cast<std::int64_t>(a.cols()) * b.cols();
  if (rows * cols > entry_cap) {
    throw SizeCapError("kron_explicit: " + shape_str(a.rows(), a.cols()) + " x " +
                       shape_str(b.rows(), b.cols()) + " would materialize " +
                       std::to_string(rows * cols) + " entries (cap " +
                       std::to_string(entry_cap) + ")");
  }
  MatrixX<S> out(rows, cols);
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

template <class S>
S frobenius_norm(const MatrixX<S>& m) {
  return m.norm();
}

// Rank by row reduction with partial pivoting. Pivots below
// rel_tol * max|entry| of the input count as zero.
template <class S>
Index numeric_rank(const MatrixX<S>& m, double rel_tol = 1e-9) {
  assert(rel_tol > 0.0);
  if (m.size() == 0) return 0;
  const double scale = static_cast<double>(m.cwiseAbs().maxCoeff());
  if (scale == 0.0) return 0;
  const double tol = rel_tol * scale;
  Eigen::MatrixXd work = m.template cast<double>();
  Index rank = 0;
  for (Index col = 0; col < work.cols() && rank < work.rows(); ++col) {
    Index offset = 0;
    const double pivot = work.col(col).tail(work.rows() - rank).cwiseAbs().maxCoeff(&offset);
    if (pivot <= tol) continue;
    const Index pivot_row = rank + offset;
    if (pivot_row != rank) work.row(rank).swap(work.row(pivot_row));
    for (Index r = rank + 1; r < work.rows(); ++r) {
      const double factor = work(r, col) / work(rank, col);
      if (factor != 0.0) work.row(r).tail(work.cols() - col) -= factor * work.row(rank).tail(work.cols() - col);
    }
    ++rank;
  }
  return rank;
}

// Zero padding appended to the end; refuses to shorten.
template <class S>
VectorX<S> pad_vector(const VectorX<S>& x, Index target_len) {
  if (target_len < x.size()) {
    throw ShapeError("pad_vector: target length " + std::to_string(target_len) +
                     " is shorter than input length " + std::to_string(x.size()) +
                     " (use truncate_vector)");
  }
  VectorX<S> out = VectorX<S>::Zero(target_len);
  out.head(x.size()) = x;
  return out;
}

// Keeps the first target_len entries; refuses to lengthen.
template <class S>
VectorX<S> truncate_vector(const VectorX<S>& x, Index target_len) {
  if (target_len > x.size()) {
    throw ShapeError("truncate_vector: target length " + std::to_string(target_len) +
                     " exceeds input length " + std::to_string(x.size()) + " (use pad_vector)");
  }
  return x.head(target_len);
}

}  // namespace moka
