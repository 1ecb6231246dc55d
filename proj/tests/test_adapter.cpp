#include <doctest.h>

#include <cstring>

#include "moka/adapter.hpp"
#include "moka/verify.hpp"
#include "oracles.hpp"

using namespace moka;

namespace {

Matrix matrix_1x1(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return m;
}

MixtureAdapter single_pair_adapter(KronFactorPair pair, Index m, Index n) {
  MixtureAdapter adapter;
  adapter.pairs.push_back(std::move(pair));
  adapter.gate_logits = Vector::Zero(1);
  adapter.out_dim = m;
  adapter.in_dim = n;
  return adapter;
}

}  // namespace

TEST_CASE("apply_pair of identity factors is the identity") {
  const KronFactorPair pair =
      KronFactorPair::dense(Matrix::Identity(2, 2), Matrix::Identity(2, 2));
  Vector x(4);
  x << 1, 2, 3, 4;
  CHECK(apply_pair(pair, x, 4, 4) == x);
}

TEST_CASE("apply_pair scalar case") {
  const KronFactorPair pair = KronFactorPair::dense(matrix_1x1(2.0), matrix_1x1(3.0));
  Vector x(1);
  x << 5;
  const Vector y = apply_pair(pair, x, 1, 1);
  CHECK(y.size() == 1);
  CHECK(y[0] == 30.0);
}

TEST_CASE("apply_pair matches the explicit Kronecker matvec with truncation") {
  SplitRng rng(21, Stream::kSweep);
  const Matrix a = rng.gaussian_matrix(3, 4);
  const Matrix b = rng.gaussian_matrix(5, 2);
  const KronFactorPair pair = KronFactorPair::dense(a, b);
  const Vector x = rng.gaussian_vector(8);  // n_a*n_b = 8, exact fit on input
  const Vector fast = apply_pair(pair, x, 8, 15);
  const Vector slow =
      truncate_vector(Vector(kron_explicit(a, b) * pad_vector(x, 8)), 15);
  CHECK((fast - slow).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("exact-fit dims reduce the apply to the bare matmul identity") {
  SplitRng rng(22, Stream::kSweep);
  const Matrix a = rng.gaussian_matrix(3, 2);
  const Matrix b = rng.gaussian_matrix(4, 5);
  const KronFactorPair pair = KronFactorPair::dense(a, b);
  const Vector x = rng.gaussian_vector(10);

  // pad and truncate degenerate to identities at exact fit
  CHECK(pad_vector(x, pair.in_capacity()) == x);
  const Vector via_apply = apply_pair(pair, x, 10, 12);
  CHECK(truncate_vector(via_apply, pair.out_capacity()) == via_apply);

  // identical to the bare identity when the reshape view shares the layout
  Eigen::Map<const Eigen::MatrixXd> reshaped(x.data(), 5, 2);
  const Matrix bx = b * reshaped;
  CHECK(via_apply == vec_matrix(Matrix(bx * a.transpose())));

  // and within rounding of it when the reshape is materialized first
  const Vector direct = vec_matrix(Matrix(b * reshape_vec_to_matrix(x, 5, 2) * a.transpose()));
  CHECK((via_apply - direct).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("gates: uniform logits, log weights, saturation") {
  MixtureAdapter adapter;
  adapter.pairs.resize(3);
  adapter.gate_logits = Vector::Zero(3);
  adapter.in_dim = adapter.out_dim = 1;
  const Vector uniform = gates(adapter);
  for (Index i = 0; i < 3; ++i) CHECK(uniform[i] == doctest::Approx(1.0 / 3).epsilon(1e-15));

  adapter.gate_logits << std::log(1.0), std::log(2.0), std::log(3.0);
  const Vector weighted = gates(adapter);
  CHECK(weighted[0] == doctest::Approx(1.0 / 6).epsilon(1e-14));
  CHECK(weighted[1] == doctest::Approx(2.0 / 6).epsilon(1e-14));
  CHECK(weighted[2] == doctest::Approx(3.0 / 6).epsilon(1e-14));

  MixtureAdapter extreme;
  extreme.pairs.resize(2);
  extreme.gate_logits = Vector(2);
  extreme.gate_logits << 1000.0, 0.0;
  extreme.in_dim = extreme.out_dim = 1;
  const Vector saturated = gates(extreme);
  CHECK(saturated.allFinite());
  CHECK(saturated[0] == 1.0);
  CHECK(saturated[1] == 0.0);
}

TEST_CASE("gate simplex and shift invariance") {
  SplitRng rng(23, Stream::kSweep);
  for (int rep = 0; rep < 30; ++rep) {
    MixtureAdapter adapter;
    const Index r = 1 + rng.uniform_index(6);
    adapter.pairs.resize(r);
    adapter.gate_logits = rng.gaussian_vector(r) * 10.0;
    adapter.in_dim = adapter.out_dim = 1;
    const Vector alpha = gates(adapter);
    CHECK(std::abs(alpha.sum() - 1.0) <= 1e-12);
    CHECK(alpha.minCoeff() > 0.0);

    MixtureAdapter shifted = adapter;
    shifted.gate_logits.array() += rng.uniform(-50.0, 50.0);
    CHECK((gates(shifted) - alpha).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("apply_mixture with one pair equals apply_pair exactly") {
  SplitRng rng(24, Stream::kSweep);
  const MixtureAdapter adapter = random_mixture(rng, 5, 1);
  const Vector x = rng.gaussian_vector(adapter.in_dim);
  CHECK(apply_mixture(adapter, x) ==
        apply_pair(adapter.pairs[0], x, adapter.in_dim, adapter.out_dim));
}

TEST_CASE("two identical pairs under uniform gates equal the single-pair output") {
  SplitRng rng(25, Stream::kSweep);
  const Matrix a = rng.gaussian_matrix(3, 3);
  const Matrix b = rng.gaussian_matrix(3, 3);
  MixtureAdapter adapter;
  adapter.pairs.push_back(KronFactorPair::dense(a, b));
  adapter.pairs.push_back(KronFactorPair::dense(a, b));
  adapter.gate_logits = Vector::Zero(2);
  adapter.in_dim = adapter.out_dim = 9;
  const Vector x = rng.gaussian_vector(9);
  CHECK(apply_mixture(adapter, x) == apply_pair(adapter.pairs[0], x, 9, 9));
}

TEST_CASE("apply_mixture matches the explicit-mixture oracle") {
  SplitRng rng(26, Stream::kSweep);
  for (int rep = 0; rep < 20; ++rep) {
    const MixtureAdapter adapter = random_mixture(rng, 8, 3);
    const Vector x = rng.gaussian_vector(adapter.in_dim);
    const Vector fast = apply_mixture(adapter, x);
    const Vector slow = oracles::explicit_mixture_matvec(adapter, x);
    CHECK((fast - slow).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("apply_mixture is linear") {
  SplitRng rng(27, Stream::kSweep);
  for (int rep = 0; rep < 10; ++rep) {
    const MixtureAdapter adapter = random_mixture(rng, 6, 2);
    const Vector x = rng.gaussian_vector(adapter.in_dim);
    const Vector y = rng.gaussian_vector(adapter.in_dim);
    const double s = rng.uniform(-2.0, 2.0);
    const double t = rng.uniform(-2.0, 2.0);
    const Vector combined = apply_mixture(adapter, Vector(s * x + t * y));
    const Vector separate = s * apply_mixture(adapter, x) + t * apply_mixture(adapter, y);
    CHECK((combined - separate).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("adapted_forward: zero-initialized adapter leaves the frozen layer untouched") {
  SplitRng rng(28, Stream::kSweep);
  const std::vector<PairShape> shapes = {{4, 4, 4, 4, false}, {2, 8, 8, 2, false}};
  const MixtureAdapter adapter = make_mixture_adapter(shapes, 16, 16, rng);
  const Matrix w = rng.gaussian_matrix(16, 16);
  const Vector x = rng.gaussian_vector(16);
  CHECK(adapted_forward(w, adapter, x) == Vector(w * x));

  const Matrix zero = Matrix::Zero(16, 16);
  MixtureAdapter live = adapter;
  for (auto& pair : live.pairs) pair.b = rng.gaussian_matrix(pair.m_b(), pair.n_b());
  CHECK(adapted_forward(zero, live, x) == apply_mixture(live, x));
}

TEST_CASE("adapted_forward matches the materialized update") {
  SplitRng rng(29, Stream::kSweep);
  for (int rep = 0; rep < 10; ++rep) {
    const MixtureAdapter adapter = random_mixture(rng, 6, 2);
    const Matrix w = rng.gaussian_matrix(adapter.out_dim, adapter.in_dim);
    const Vector x = rng.gaussian_vector(adapter.in_dim);
    const Matrix effective = w + materialize_delta(adapter);
    CHECK((adapted_forward(w, adapter, x) - effective * x).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("materialize_delta exact-fit single pair is the gated Kronecker product") {
  SplitRng rng(30, Stream::kSweep);
  const Matrix a = rng.gaussian_matrix(3, 2);
  const Matrix b = rng.gaussian_matrix(2, 3);
  MixtureAdapter adapter = single_pair_adapter(KronFactorPair::dense(a, b), 6, 6);
  CHECK(materialize_delta(adapter) == kron_explicit(a, b));
}

TEST_CASE("materialize_delta under a saturated gate") {
  SplitRng rng(31, Stream::kSweep);
  MixtureAdapter adapter;
  for (int i = 0; i < 3; ++i) {
    adapter.pairs.push_back(
        KronFactorPair::dense(rng.gaussian_matrix(2, 2), rng.gaussian_matrix(3, 3)));
  }
  adapter.gate_logits = Vector(3);
  adapter.gate_logits << 50.0, 0.0, 0.0;
  adapter.in_dim = adapter.out_dim = 6;
  const Matrix delta = materialize_delta(adapter);
  const Matrix winner = kron_explicit(adapter.pairs[0].a, adapter.pairs[0].b);
  CHECK((delta - winner).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("materialize_delta agrees with basis probes") {
  SplitRng rng(32, Stream::kSweep);
  for (int rep = 0; rep < 5; ++rep) {
    const MixtureAdapter adapter = random_mixture(rng, 5, 2);
    const Matrix delta = materialize_delta(adapter);
    for (Index j = 0; j < adapter.in_dim; ++j) {
      Vector basis = Vector::Zero(adapter.in_dim);
      basis[j] = 1.0;
      CHECK((delta.col(j) - apply_mixture(adapter, basis)).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("identity_a fast path is bitwise equal to the explicit identity") {
  SplitRng rng(33, Stream::kSweep);
  for (int rep = 0; rep < 50; ++rep) {
    const Index p = 2 + rng.uniform_index(12);
    const Index n = 1 + rng.uniform_index(60);
    const Index order = (n + p - 1) / p;
    const Index m = std::max<Index>(1, order * p - rng.uniform_index(p));
    const KronFactorPair fast = KronFactorPair::identity(order, rng.gaussian_matrix(p, p));
    const KronFactorPair slow = with_explicit_identity(fast);
    const Vector x = rng.gaussian_vector(n);
    const Vector fast_y = apply_pair(fast, x, n, m);
    const Vector slow_y = apply_pair(slow, x, n, m);
    REQUIRE(fast_y.size() == slow_y.size());
    CHECK(std::memcmp(fast_y.data(), slow_y.data(), sizeof(double) * fast_y.size()) == 0);
  }
}

TEST_CASE("identity pairs report no trainable A parameters") {
  const KronFactorPair pair = KronFactorPair::identity(7, Matrix::Ones(3, 3));
  CHECK(pair.trainable_params() == 9);
  CHECK(pair.m_a() == 7);
  CHECK(pair.n_a() == 7);
  const KronFactorPair dense = with_explicit_identity(pair);
  CHECK(dense.trainable_params() == 49 + 9);
}

TEST_CASE("shape violations cite the offending pair index") {
  MixtureAdapter adapter;
  adapter.pairs.push_back(KronFactorPair::dense(Matrix::Ones(2, 2), Matrix::Ones(2, 2)));
  adapter.pairs.push_back(KronFactorPair::dense(Matrix::Ones(1, 1), Matrix::Ones(2, 2)));
  adapter.gate_logits = Vector::Zero(2);
  adapter.in_dim = 3;
  adapter.out_dim = 4;  // pair 1 offers only 1*2 = 2 output dims
  try {
    validate_adapter(adapter);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("pair 1") != std::string::npos);
  }
  const Vector x = Vector::Zero(3);
  CHECK_THROWS_AS(apply_mixture(adapter, x), ShapeError);
}

TEST_CASE("make_mixture_adapter starts from the zero update") {
  SplitRng rng(34, Stream::kSweep);
  const std::vector<PairShape> shapes = {{4, 4, 4, 4, false}, {8, 8, 2, 2, true}};
  const MixtureAdapter adapter = make_mixture_adapter(shapes, 16, 16, rng);
  CHECK(adapter.pairs[0].b.isZero(0.0));
  CHECK(adapter.pairs[1].b.isZero(0.0));
  CHECK(adapter.pairs[1].identity_a);
  CHECK(adapter.gate_logits.isZero(0.0));
  const Vector x = Vector::Ones(16);
  CHECK(apply_mixture(adapter, x).isZero(0.0));
}
