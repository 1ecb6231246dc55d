#pragma once

#include <functional>
#include <string>
#include <vector>

#include "moka/adapter.hpp"

namespace moka {

struct PairGradient {
  Matrix d_a;  // 0x0 for identity_a pairs
  Matrix d_b;
};

// Gradients of a scalar loss with respect to everything trainable plus
// the layer input.
struct AdapterGradients {
  std::vector<PairGradient> pairs;
  Vector d_gate_logits;
  Vector d_x;
};

// Closed-form backward through the gated mixture given the upstream
// gradient of the loss with respect to the mixture output.
AdapterGradients backward_mixture(const MixtureAdapter& adapter, const Vector& x,
                                  const Vector& upstream);

AdapterGradients zero_gradients_like(const MixtureAdapter& adapter);
void accumulate(AdapterGradients& dst, const AdapterGradients& src);
void scale_gradients(AdapterGradients& grads, double factor);

// Sum of squared entries over all trainable blocks (factors + gate logits).
double squared_param_grad_norm(const AdapterGradients& grads);

// Empirical value of the factor-boundedness quantity
//   sum_i ( ||dA_i||_F^2 ||B_i||_F^2 + ||A_i||_F^2 ||dB_i||_F^2 ),
// with ||I_k||_F^2 = k for implicit identities (whose dA term is absent).
double factor_grad_bound_term(const MixtureAdapter& adapter, const AdapterGradients& grads);

struct FdBlockResult {
  std::string block;
  double max_rel_err = 0.0;
};

struct FdReport {
  std::vector<FdBlockResult> blocks;
  double worst = 0.0;

  bool pass(double tol) const { return worst <= tol; }
};

// Central finite differences for every trainable scalar and every input
// entry, compared against the supplied analytic gradients. Relative error
// denominator floors at 1e-8.
FdReport finite_difference_compare(const MixtureAdapter& adapter, const Vector& x,
                                   const std::function<double(const Vector&)>& loss,
                                   const AdapterGradients& analytic, double eps = 1e-5);

// Convenience wrapper that derives the analytic side from backward_mixture
// using loss_grad(output) as the upstream gradient.
FdReport finite_difference_check(const MixtureAdapter& adapter, const Vector& x,
                                 const std::function<double(const Vector&)>& loss,
                                 const std::function<Vector(const Vector&)>& loss_grad,
                                 double eps = 1e-5);

}  // namespace moka
