#include "moka/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <limits>

namespace moka {

std::int64_t reformulated_flops(const PairShape& shape) {
  const std::int64_t first = 2ll * shape.m_b * shape.n_b * shape.n_a;  // B * X
  if (shape.identity_a) return first;
  return first + 2ll * shape.m_b * shape.n_a * shape.m_a;  // (B*X) * A^T
}

std::int64_t explicit_matvec_flops(Index m, Index n) { return 2ll * m * n; }

std::int64_t reformulated_transient_bytes(const PairShape& shape, int scalar_bytes) {
  const std::int64_t padded = static_cast<std::int64_t>(shape.n_a) * shape.n_b;
  const std::int64_t bx = static_cast<std::int64_t>(shape.m_b) * shape.n_a;
  const std::int64_t full_out = static_cast<std::int64_t>(shape.m_a) * shape.m_b;
  return (padded + bx + full_out) * scalar_bytes;
}

std::int64_t explicit_transient_bytes(const PairShape& shape, int scalar_bytes) {
  const std::int64_t kron = static_cast<std::int64_t>(shape.m_a) * shape.m_b * shape.n_a * shape.n_b;
  const std::int64_t padded = static_cast<std::int64_t>(shape.n_a) * shape.n_b;
  return (kron + padded) * scalar_bytes;
}

namespace {

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  if (values.size() % 2) return values[mid];
  return 0.5 * (values[mid - 1] + values[mid]);
}

template <class S>
MixtureAdapterT<S> random_bench_adapter(const PairShape& shape, SplitRng& rng) {
  MixtureAdapterT<S> adapter;
  adapter.out_dim = shape.m_a * shape.m_b;
  adapter.in_dim = shape.n_a * shape.n_b;
  adapter.gate_logits = VectorX<S>::Zero(1);
  const double a_scale = 1.0 / std::sqrt(static_cast<double>(shape.n_a));
  const double b_scale = 1.0 / std::sqrt(static_cast<double>(shape.n_b));
  MatrixX<S> b = (rng.gaussian_matrix(shape.m_b, shape.n_b) * b_scale).template cast<S>();
  if (shape.identity_a) {
    adapter.pairs.push_back(KronFactorPairT<S>::identity(shape.n_a, std::move(b)));
  } else {
    MatrixX<S> a = (rng.gaussian_matrix(shape.m_a, shape.n_a) * a_scale).template cast<S>();
    adapter.pairs.push_back(KronFactorPairT<S>::dense(std::move(a), std::move(b)));
  }
  return adapter;
}

template <class S>
BenchRow run_case(const PairShape& shape, int repeats, std::uint64_t seed, bool measure) {
  using Clock = std::chrono::steady_clock;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  BenchRow row;
  row.label = std::to_string(shape.m_a) + "x" + std::to_string(shape.n_a) + "x" +
              std::to_string(shape.m_b) + "x" + std::to_string(shape.n_b) +
              (shape.identity_a ? "i" : "");
  row.m = shape.m_a * shape.m_b;
  row.n = shape.n_a * shape.n_b;
  row.flops_reformulated = reformulated_flops(shape);
  row.flops_explicit = explicit_matvec_flops(row.m, row.n);
  row.flop_ratio = static_cast<double>(row.flops_explicit) / static_cast<double>(row.flops_reformulated);
  row.bytes_reformulated = reformulated_transient_bytes(shape, sizeof(S));
  row.bytes_explicit = explicit_transient_bytes(shape, sizeof(S));
  row.explicit_over_cap = static_cast<std::int64_t>(row.m) * row.n > kDefaultKronEntryCap;

  SplitRng rng(seed, Stream::kBench);
  const MixtureAdapterT<S> adapter = random_bench_adapter<S>(shape, rng);
  const VectorX<S> x = rng.gaussian_vector(row.n).cast<S>();

  // correctness cross-check between the two arms
  if (!row.explicit_over_cap) {
    const VectorX<S> fast = apply_mixture(adapter, x);
    const VectorX<S> slow = materialize_delta(adapter) * x;
    row.max_abs_diff = static_cast<double>((fast - slow).cwiseAbs().maxCoeff());
  }

  if (!measure) {
    row.median_us_reformulated = nan;
    row.median_us_explicit = nan;
    row.time_ratio = nan;
    return row;
  }

  S sink = S(0);  // keeps the timed results alive
  std::vector<double> fast_us, slow_us;
  for (int rep = 0; rep < repeats; ++rep) {
    const auto t0 = Clock::now();
    const VectorX<S> y = apply_mixture(adapter, x);
    const auto t1 = Clock::now();
    sink += y.sum();
    fast_us.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
  }
  row.median_us_reformulated = median(fast_us);

  if (row.explicit_over_cap) {
    row.median_us_explicit = nan;
    row.time_ratio = nan;
  } else {
    for (int rep = 0; rep < repeats; ++rep) {
      const auto t0 = Clock::now();
      const MatrixX<S> delta = materialize_delta(adapter);
      const VectorX<S> y = delta * x;
      const auto t1 = Clock::now();
      sink += y.sum();
      slow_us.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
    }
    row.median_us_explicit = median(slow_us);
    row.time_ratio = row.median_us_explicit / row.median_us_reformulated;
  }
  volatile double keep = static_cast<double>(sink);
  (void)keep;
  return row;
}

}  // namespace

BenchRow run_bench_case(const PairShape& shape, int repeats, std::uint64_t seed, bool measure,
                        bool use_f32) {
  if (repeats < 1) throw ConfigError("bench: repeats must be >= 1");
  if (shape.m_a < 1 || shape.n_a < 1 || shape.m_b < 1 || shape.n_b < 1) {
    throw ConfigError("bench: factor dims must be >= 1");
  }
  if (shape.identity_a && shape.m_a != shape.n_a) {
    throw ConfigError("bench: identity A factor must be square");
  }
  return use_f32 ? run_case<float>(shape, repeats, seed, measure)
                 : run_case<double>(shape, repeats, seed, measure);
}

std::vector<PairShape> parse_shape_list(const std::string& csv) {
  std::vector<PairShape> shapes;
  std::size_t start = 0;
  while (start <= csv.size()) {
    std::size_t end = csv.find(',', start);
    if (end == std::string::npos) end = csv.size();
    std::string token = csv.substr(start, end - start);
    start = end + 1;
    if (token.empty()) continue;

    PairShape shape;
    if (token.back() == 'i') {
      shape.identity_a = true;
      token.pop_back();
    }
    Index dims[4] = {0, 0, 0, 0};
    std::size_t pos = 0;
    for (int d = 0; d < 4; ++d) {
      std::size_t sep = token.find('x', pos);
      if (d < 3 && sep == std::string::npos) throw ConfigError("bench: malformed shape '" + token + "' (want MAxNAxMBxNB)");
      const std::string part = token.substr(pos, (d < 3 ? sep : token.size()) - pos);
      std::int64_t value = 0;
      const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), value);
      if (ec != std::errc{} || ptr != part.data() + part.size() || value < 1) {
        throw ConfigError("bench: invalid dimension '" + part + "' in shape '" + token + "'");
      }
      dims[d] = value;
      pos = sep + 1;
    }
    shape.m_a = dims[0];
    shape.n_a = dims[1];
    shape.m_b = dims[2];
    shape.n_b = dims[3];
    if (shape.identity_a && shape.m_a != shape.n_a) {
      throw ConfigError("bench: identity shape '" + token + "i' must have m_a == n_a");
    }
    shapes.push_back(shape);
  }
  if (shapes.empty()) throw ConfigError("bench: empty shape list");
  return shapes;
}

}  // namespace moka
