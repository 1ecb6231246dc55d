#include "moka/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "moka/grad.hpp"

namespace moka {

namespace {

// Entry-by-entry triple loop, independent of the Eigen product path.
Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix out = Matrix::Zero(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (Index k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  return out;
}

Matrix planted_rank_matrix(SplitRng& rng, Index rows, Index cols, Index rank) {
  Matrix out = Matrix::Zero(rows, cols);
  for (Index k = 0; k < rank; ++k) {
    out += rng.gaussian_vector(rows) * rng.gaussian_vector(cols).transpose();
  }
  return out;
}

KronFactorPair random_pair(SplitRng& rng, Index max_dim, bool identity) {
  const auto dim = [&rng, max_dim] { return 1 + rng.uniform_index(max_dim); };
  if (identity) {
    const Index order = dim();
    return KronFactorPair::identity(order, rng.gaussian_matrix(dim(), dim()));
  }
  const Index m_a = dim(), n_a = dim();
  return KronFactorPair::dense(
      rng.gaussian_matrix(m_a, n_a) / std::sqrt(static_cast<double>(n_a)),
      rng.gaussian_matrix(dim(), dim()));
}

// Mixture output vs the sum of gate-weighted explicit-Kronecker matvecs
// with the same pad/truncate handling.
double oracle_equivalence_diff(const MixtureAdapter& adapter, SplitRng& rng) {
  const Vector x = rng.gaussian_vector(adapter.in_dim);
  const Vector fast = apply_mixture(adapter, x);
  const Vector alpha = gates(adapter);
  Vector slow = Vector::Zero(adapter.out_dim);
  for (Index i = 0; i < adapter.pair_count(); ++i) {
    const auto& pair = adapter.pairs[i];
    const Matrix kron = kron_explicit(pair.a_materialized(), pair.b);
    const Vector padded = pad_vector(x, pair.in_capacity());
    slow += alpha[i] * truncate_vector(Vector(kron * padded), adapter.out_dim);
  }
  return (fast - slow).cwiseAbs().maxCoeff();
}

bool bitwise_equal(const Vector& a, const Vector& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

struct SuiteBuilder {
  SuiteResult result;

  SuiteBuilder(std::string name, double tol) {
    result.name = std::move(name);
    result.tol = tol;
  }

  void observe(double err) {
    result.worst = std::max(result.worst, err);
    ++result.instances;
  }

  SuiteResult finish() {
    result.pass = result.worst <= result.tol;
    return result;
  }
};

}  // namespace

MixtureAdapter random_mixture(SplitRng& rng, Index max_dim, Index r) {
  MixtureAdapter adapter;
  for (Index i = 0; i < r; ++i) {
    adapter.pairs.push_back(random_pair(rng, max_dim, rng.uniform01() < 0.25));
  }
  Index in_cap = adapter.pairs[0].in_capacity();
  Index out_cap = adapter.pairs[0].out_capacity();
  for (const auto& pair : adapter.pairs) {
    in_cap = std::min(in_cap, pair.in_capacity());
    out_cap = std::min(out_cap, pair.out_capacity());
  }
  adapter.in_dim = std::max<Index>(1, in_cap - rng.uniform_index(std::min<Index>(in_cap, 4)));
  adapter.out_dim = std::max<Index>(1, out_cap - rng.uniform_index(std::min<Index>(out_cap, 4)));
  adapter.gate_logits = Vector(r);
  for (Index i = 0; i < r; ++i) adapter.gate_logits[i] = rng.uniform(-1.0, 1.0);
  validate_adapter(adapter);
  return adapter;
}

std::vector<SuiteResult> run_verification(const VerifyOptions& options) {
  std::vector<SuiteResult> suites;
  for (const Index size : options.sizes) {
    if (size < 1 || size > 32) {
      throw ConfigError("verify: size " + std::to_string(size) + " out of range [1, 32]");
    }
  }

  {
    SuiteBuilder suite("reshape-roundtrip", 0.0);
    SplitRng rng(options.seed, Stream::kSweep, 1);
    for (const Index size : options.sizes) {
      for (int rep = 0; rep < 20; ++rep) {
        const Index rows = 1 + rng.uniform_index(size);
        const Index cols = 1 + rng.uniform_index(size);
        const Vector x = rng.gaussian_vector(rows * cols);
        const Matrix reshaped = reshape_vec_to_matrix(x, rows, cols);
        const Vector back = vec_matrix(reshaped);
        suite.observe((back - x).cwiseAbs().maxCoeff());
        const Matrix m = rng.gaussian_matrix(rows, cols);
        const Matrix round = reshape_vec_to_matrix(Vector(vec_matrix(m)), rows, cols);
        suite.observe((round - m).cwiseAbs().maxCoeff());
      }
    }
    suites.push_back(suite.finish());
  }

  {
    SuiteBuilder suite("matmul-oracle", 1e-12);
    SplitRng rng(options.seed, Stream::kSweep, 2);
    for (const Index size : options.sizes) {
      for (int rep = 0; rep < 10; ++rep) {
        const Index rows = 1 + rng.uniform_index(size);
        const Index inner = 1 + rng.uniform_index(size);
        const Index cols = 1 + rng.uniform_index(size);
        const Matrix a = rng.gaussian_matrix(rows, inner);
        const Matrix b = rng.gaussian_matrix(inner, cols);
        suite.observe((matmul(a, b) - naive_matmul(a, b)).cwiseAbs().maxCoeff());
      }
    }
    suites.push_back(suite.finish());
  }

  {
    SuiteBuilder suite("frobenius-multiplicativity", 1e-12);
    SplitRng rng(options.seed, Stream::kSweep, 3);
    for (const Index size : options.sizes) {
      for (int rep = 0; rep < 10; ++rep) {
        const Matrix a = rng.gaussian_matrix(1 + rng.uniform_index(size), 1 + rng.uniform_index(size));
        const Matrix b = rng.gaussian_matrix(1 + rng.uniform_index(size), 1 + rng.uniform_index(size));
        const double product_norm = frobenius_norm(Matrix(kron_explicit(a, b)));
        const double factor_norms = frobenius_norm(a) * frobenius_norm(b);
        const double denom = std::max(factor_norms, 1e-300);
        suite.observe(std::abs(product_norm - factor_norms) / denom);
      }
    }
    suites.push_back(suite.finish());
  }

  {
    SuiteBuilder suite("rank-multiplicativity", 0.0);
    SplitRng rng(options.seed, Stream::kSweep, 4);
    for (Index rank_a = 1; rank_a <= 3; ++rank_a) {
      for (Index rank_b = 1; rank_b <= 3; ++rank_b) {
        for (int rep = 0; rep < 4; ++rep) {
          const Index da = rank_a + rng.uniform_index(8 - rank_a + 1);
          const Index db = rank_b + rng.uniform_index(8 - rank_b + 1);
          const Matrix a = planted_rank_matrix(rng, da, da, rank_a);
          const Matrix b = planted_rank_matrix(rng, db, db, rank_b);
          const Index lhs = numeric_rank(Matrix(kron_explicit(a, b)));
          const Index rhs = numeric_rank(a) * numeric_rank(b);
          suite.observe(static_cast<double>(std::abs(lhs - rhs)));
        }
      }
    }
    suites.push_back(suite.finish());
  }

  {
    SuiteBuilder suite("gate-properties", 1e-12);
    SplitRng rng(options.seed, Stream::kSweep, 5);
    for (int rep = 0; rep < 50; ++rep) {
      MixtureAdapter adapter;
      const Index r = 1 + rng.uniform_index(6);
      adapter.pairs.resize(r);  // gates() only reads logits and pair count
      adapter.gate_logits = Vector(r);
      for (Index i = 0; i < r; ++i) adapter.gate_logits[i] = rng.uniform(-30.0, 30.0);
      adapter.in_dim = adapter.out_dim = 1;
      const Vector alpha = gates(adapter);
      suite.observe(std::abs(alpha.sum() - 1.0));
      suite.observe(alpha.minCoeff() > 0.0 ? 0.0 : 1.0);
      MixtureAdapter shifted = adapter;
      shifted.gate_logits.array() += rng.uniform(-100.0, 100.0);
      suite.observe((gates(shifted) - alpha).cwiseAbs().maxCoeff());
    }
    // saturation: no NaN/Inf under extreme logits
    MixtureAdapter saturated;
    saturated.pairs.resize(2);
    saturated.gate_logits = Vector(2);
    saturated.gate_logits << 1000.0, 0.0;
    saturated.in_dim = saturated.out_dim = 1;
    const Vector alpha = gates(saturated);
    suite.observe(alpha.allFinite() ? std::abs(alpha.sum() - 1.0) : 1.0);
    suites.push_back(suite.finish());
  }

  {
    SuiteBuilder suite("oracle-equivalence", 1e-10);
    SplitRng rng(options.seed, Stream::kSweep, 6);
    for (const Index size : options.sizes) {
      for (int rep = 0; rep < 12; ++rep) {
        const MixtureAdapter adapter = random_mixture(rng, size, 1 + rng.uniform_index(4));
        suite.observe(oracle_equivalence_diff(adapter, rng));
      }
    }
    suites.push_back(suite.finish());
  }

  {
    SuiteBuilder suite("fd-gradients", 1e-5);
    SplitRng rng(options.seed, Stream::kSweep, 7);
    for (int rep = 0; rep < 8; ++rep) {
      const Index max_dim = std::min<Index>(options.sizes[rep % options.sizes.size()], 6);
      const MixtureAdapter adapter = random_mixture(rng, max_dim, 1 + rng.uniform_index(3));
      const Vector x = rng.gaussian_vector(adapter.in_dim);
      const Vector direction = rng.gaussian_vector(adapter.out_dim);
      const auto loss = [&direction](const Vector& y) {
        return 0.5 * y.squaredNorm() + direction.dot(y);
      };
      const Vector output = apply_mixture(adapter, x);
      AdapterGradients analytic = backward_mixture(adapter, x, Vector(output + direction));
      if (options.inject_bug) analytic.pairs[0].d_b *= 1.0 + 1e-3;
      suite.observe(finite_difference_compare(adapter, x, loss, analytic).worst);
    }
    suites.push_back(suite.finish());
  }

  {
    SuiteBuilder suite("identity-fastpath", 0.0);
    SplitRng rng(options.seed, Stream::kSweep, 8);
    for (int rep = 0; rep < 60; ++rep) {
      const Index p = 2 + rng.uniform_index(15);
      const Index n = 1 + rng.uniform_index(64);
      const Index order = (n + p - 1) / p;  // padding stays below one column
      const Index m = std::max<Index>(1, order * p - rng.uniform_index(p));
      const KronFactorPair fast = KronFactorPair::identity(order, rng.gaussian_matrix(p, p));
      const KronFactorPair slow = with_explicit_identity(fast);
      const Vector x = rng.gaussian_vector(n);
      suite.observe(bitwise_equal(apply_pair(fast, x, n, m), apply_pair(slow, x, n, m)) ? 0.0 : 1.0);
    }
    suites.push_back(suite.finish());
  }

  return suites;
}

}  // namespace moka
