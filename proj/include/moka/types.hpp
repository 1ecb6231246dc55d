#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace moka {

using Index = Eigen::Index;

// Dense containers used everywhere. Matrices are row-major so their raw
// buffers read naturally as (rows x cols) float64 arrays; the reshape/vec
// operators below define their own (column-stacking) layout convention
// independently of this storage order.
template <class Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

class SizeCapError : public std::length_error {
 public:
  explicit SizeCapError(const std::string& what) : std::length_error(what) {}
};

class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

inline std::string shape_str(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

}  // namespace moka
