#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moka/adapter.hpp"

namespace moka {

// Multiply-add pairs counted as 2 flops. The reformulated apply costs two
// small products, B*X then (B*X)*A^T; the identity-A variant drops the
// second one. The explicit baseline is a dense (m x n) matvec.
std::int64_t reformulated_flops(const PairShape& shape);
std::int64_t explicit_matvec_flops(Index m, Index n);

// Working memory beyond inputs/outputs, analytic estimates in bytes:
// the reformulated path holds the padded input plus two small products;
// the explicit path holds the materialized (full Kronecker) matrix.
std::int64_t reformulated_transient_bytes(const PairShape& shape, int scalar_bytes);
std::int64_t explicit_transient_bytes(const PairShape& shape, int scalar_bytes);

struct BenchRow {
  std::string label;
  Index m = 0;
  Index n = 0;
  std::int64_t flops_reformulated = 0;
  std::int64_t flops_explicit = 0;
  double flop_ratio = 0.0;
  std::int64_t bytes_reformulated = 0;
  std::int64_t bytes_explicit = 0;
  double median_us_reformulated = 0.0;  // NaN when not measured
  double median_us_explicit = 0.0;      // NaN when not measured or over cap
  double time_ratio = 0.0;              // explicit / reformulated; NaN likewise
  bool explicit_over_cap = false;
  double max_abs_diff = 0.0;  // apply vs materialize-then-matvec cross-check
};

// Times apply (reformulated) against materialize-then-matvec (explicit)
// on a single-pair adapter with random factors; exact-fit dims m = m_a*m_b,
// n = n_a*n_b. With measure unset the timing cells are NaN. use_f32 runs
// both arms in single precision.
BenchRow run_bench_case(const PairShape& shape, int repeats, std::uint64_t seed, bool measure,
                        bool use_f32 = false);

// "MAxNAxMBxNB" with an optional trailing "i" for an identity A factor,
// comma separated. Throws ConfigError on malformed entries.
std::vector<PairShape> parse_shape_list(const std::string& csv);

}  // namespace moka
