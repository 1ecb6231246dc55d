#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moka/adapter.hpp"

namespace moka {

struct SuiteResult {
  std::string name;
  int instances = 0;
  double worst = 0.0;
  double tol = 0.0;
  bool pass = false;
};

struct VerifyOptions {
  std::uint64_t seed = 1;
  std::vector<Index> sizes = {2, 3, 4, 8, 16};  // max factor dims per sweep
  bool inject_bug = false;  // harness self-test: perturbs one backward formula
};

// Random mixture with r pairs whose factor dims stay within max_dim; the
// target dims leave a little padding/truncation slack to exercise both.
MixtureAdapter random_mixture(SplitRng& rng, Index max_dim, Index r);

// Oracle, finite-difference, and property suites over seeded sweeps.
std::vector<SuiteResult> run_verification(const VerifyOptions& options);

}  // namespace moka
