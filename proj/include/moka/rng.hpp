#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "moka/types.hpp"

namespace moka {

namespace detail {

// murmur3 finalizer; bijective on 64-bit words
inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 33;
  z *= 0xff51afd7ed558ccdULL;
  z ^= z >> 33;
  z *= 0xc4ceb9fe1a85ec53ULL;
  z ^= z >> 33;
  return z;
}

}  // namespace detail

// Logical stream ids hung off a single master seed.
enum class Stream : std::uint64_t {
  kInit = 1,    // adapter parameter initialization
  kTarget = 2,  // task target construction
  kProbe = 3,   // task probe inputs
  kBatch = 4,   // per-step mini-batch indices
  kPower = 5,   // power-iteration start vectors
  kSweep = 6,   // verification sweeps
  kBench = 7,   // benchmark operands
};

// Counter-based generator: every value is a pure function of
// (seed, stream, step, counter), so draws in one stream never perturb
// another and adding instrumentation does not shift the sequence.
class SplitRng {
 public:
  SplitRng(std::uint64_t seed, Stream stream, std::uint64_t step = 0) {
    std::uint64_t k = detail::mix64(seed ^ 0x5851f42d4c957f2dULL);
    k = detail::mix64(k ^ static_cast<std::uint64_t>(stream) * 0x9e3779b97f4a7c15ULL);
    key_ = detail::mix64(k ^ step * 0xd1342543de82ef95ULL);
  }

  std::uint64_t next_u64() { return detail::mix64(key_ ^ counter_++ * 0x2545f4914f6cdd1dULL); }

  // 53-bit uniform in [0, 1)
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Box-Muller, one cached value per pair
  double gaussian() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi_v<double> * u2;
    cached_ = radius * std::sin(angle);
    has_cached_ = true;
    return radius * std::cos(angle);
  }

  Index uniform_index(Index n) { return static_cast<Index>(next_u64() % static_cast<std::uint64_t>(n)); }

  VectorX<double> gaussian_vector(Index len) {
    VectorX<double> v(len);
    for (Index i = 0; i < len; ++i) v[i] = gaussian();
    return v;
  }

  MatrixX<double> gaussian_matrix(Index rows, Index cols) {
    MatrixX<double> m(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) m(i, j) = gaussian();
    return m;
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace moka
