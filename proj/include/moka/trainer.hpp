#pragma once

#include <cstdint>
#include <vector>

#include "moka/tasks.hpp"

namespace moka {

// Training aborts when the loss exceeds this or becomes non-finite.
inline constexpr double kDivergenceCap = 1e12;

struct TrainConfig {
  double eta = 2e-4;
  int steps = 1000;
  int batch_size = 32;  // >= probe count means full batch, in probe order
  std::uint64_t seed = 0;
  int record_every = 1;
};

struct TrainRecord {
  int step = 0;
  double loss = 0.0;          // batch loss at the pre-update iterate
  double grad_norm_sq = 0.0;  // squared norm of the stacked parameter gradient
  double cum_mean_grad_norm_sq = 0.0;
};

struct TrainResult {
  std::vector<TrainRecord> records;
  double initial_loss = 0.0;
  double final_loss = 0.0;  // full-batch loss after the last update
  double min_loss = 0.0;    // best loss seen, post-update point included
  double avg_grad_norm_sq = 0.0;
  double max_factor_bound_term = 0.0;  // empirical G over the run
};

// theta <- theta - eta * grad for every trainable scalar; the frozen base
// weight is never touched. Gate logits move only on gated adapters.
void sgd_step(MixtureAdapter& adapter, const AdapterGradients& grads, double eta);

// Plain constant-rate SGD. Mini-batches are drawn with replacement from a
// counter-based stream keyed by (seed, step); batch_size >= probe_count
// runs full-batch. Records are emitted every record_every steps plus the
// final step. Throws DivergenceError when the loss leaves the finite range.
TrainResult run_training(const TrainConfig& config, std::vector<MixtureAdapter>& adapters,
                         const AdaptationTask& task);
TrainResult run_training(const TrainConfig& config, MixtureAdapter& adapter,
                         const AdaptationTask& task);

// gap/(eta*T) + eta*L*G/2
double convergence_bound(double gap, double smoothness, double grad_bound, double eta, int steps);

// sqrt(2*gap / (L*G*T)); equalizes the two bound terms.
double optimal_eta(double gap, double smoothness, double grad_bound, int steps);

struct BoundReport {
  double gap = 0.0;
  double smoothness = 0.0;
  double grad_bound = 0.0;
  double eta = 0.0;
  int steps = 0;
  double bound = 0.0;
  double measured_avg = 0.0;
  double eta_star = 0.0;
  bool violated = false;
};

// Compares the measured average squared gradient norm against the bound;
// flags violation beyond relative 1e-6.
BoundReport convergence_diagnostic(const std::vector<TrainRecord>& records, double gap,
                                   double smoothness, double grad_bound, double eta, int steps);

// Number of scalars SGD moves (factor entries plus gate logits when gated).
Index trainable_param_count(const MixtureAdapter& adapter);
Index trainable_param_count(const std::vector<MixtureAdapter>& adapters);

// Stacked-parameter helpers; ordering is pair-major (A then B per pair)
// followed by gate logits, adapters in task order.
Vector pack_param_gradients(const std::vector<AdapterGradients>& grads,
                            const std::vector<MixtureAdapter>& adapters);
void add_to_params(std::vector<MixtureAdapter>& adapters, const Vector& direction, double scale);

// Largest curvature of the composed loss in trainable-parameter space, by
// power iteration on full-batch gradient differences. Exact for losses
// that are quadratic in the parameters.
double estimate_smoothness(const AdaptationTask& task, const std::vector<MixtureAdapter>& adapters,
                           std::uint64_t seed, int max_iters = 200, double tol = 1e-12);

// Best full-batch loss over a long run at the given (stable) rate.
double estimate_min_loss(const AdaptationTask& task, std::vector<MixtureAdapter> adapters,
                         double eta, int steps, std::uint64_t seed);

struct DiagnosticCalibration {
  double gap = 0.0;
  double smoothness = 0.0;
  double grad_bound = 0.0;  // pilot-run empirical G
  double eta_star = 0.0;
  double initial_loss = 0.0;
  double min_loss = 0.0;
};

// Measures (gap, L, G) for a task instance: L by power iteration, G from a
// pilot run of `steps` steps at 1/L, the loss floor from a long-horizon
// full-batch run at 1/L.
DiagnosticCalibration calibrate_diagnostic(const AdaptationTask& task,
                                           const std::vector<MixtureAdapter>& adapters0,
                                           int steps, std::uint64_t seed);

}  // namespace moka
