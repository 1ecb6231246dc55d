#include "moka/trainer.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numeric>

namespace moka {

void sgd_step(MixtureAdapter& adapter, const AdapterGradients& grads, double eta) {
  if (grads.pairs.size() != adapter.pairs.size()) {
    throw ShapeError("sgd_step: gradient has " + std::to_string(grads.pairs.size()) +
                     " pair blocks for " + std::to_string(adapter.pairs.size()) + " pairs");
  }
  for (Index i = 0; i < adapter.pair_count(); ++i) {
    auto& pair = adapter.pairs[i];
    const auto& pg = grads.pairs[i];
    if (!pair.identity_a) {
      if (pg.d_a.rows() != pair.a.rows() || pg.d_a.cols() != pair.a.cols()) {
        throw ShapeError("sgd_step: dA shape mismatch at pair " + std::to_string(i));
      }
      pair.a -= eta * pg.d_a;
    }
    if (pg.d_b.rows() != pair.b.rows() || pg.d_b.cols() != pair.b.cols()) {
      throw ShapeError("sgd_step: dB shape mismatch at pair " + std::to_string(i));
    }
    pair.b -= eta * pg.d_b;
  }
  if (adapter.gated) adapter.gate_logits -= eta * grads.d_gate_logits;
}

TrainResult run_training(const TrainConfig& config, std::vector<MixtureAdapter>& adapters,
                         const AdaptationTask& task) {
  if (config.steps < 1) throw std::invalid_argument("run_training: steps must be >= 1");
  if (config.eta <= 0.0) throw std::invalid_argument("run_training: eta must be positive");
  if (config.batch_size < 1) throw std::invalid_argument("run_training: batch_size must be >= 1");
  if (config.record_every < 1) throw std::invalid_argument("run_training: record_every must be >= 1");
  if (static_cast<Index>(adapters.size()) != task.adapter_count()) {
    throw ShapeError("run_training: task '" + task.name() + "' expects " +
                     std::to_string(task.adapter_count()) + " adapters, got " +
                     std::to_string(adapters.size()));
  }

  const Index probe_total = task.probe_count();
  std::vector<Index> full_batch(probe_total);
  std::iota(full_batch.begin(), full_batch.end(), Index{0});
  const bool use_full_batch = config.batch_size >= probe_total;

  TrainResult result;
  result.min_loss = std::numeric_limits<double>::infinity();
  double cum_grad_norm_sq = 0.0;

  std::vector<Index> batch;
  std::vector<AdapterGradients> grads;
  for (int t = 0; t < config.steps; ++t) {
    if (use_full_batch) {
      batch = full_batch;
    } else {
      SplitRng rng(config.seed, Stream::kBatch, static_cast<std::uint64_t>(t));
      batch.resize(config.batch_size);
      for (auto& idx : batch) idx = rng.uniform_index(probe_total);
    }

    const double loss = task.evaluate(adapters, batch, &grads);
    if (!std::isfinite(loss) || loss > kDivergenceCap) {
      throw DivergenceError("training diverged at step " + std::to_string(t) + " (loss = " +
                            std::to_string(loss) + ")");
    }

    double grad_norm_sq = 0.0;
    double bound_term = 0.0;
    for (std::size_t a = 0; a < adapters.size(); ++a) {
      grad_norm_sq += squared_param_grad_norm(grads[a]);
      bound_term += factor_grad_bound_term(adapters[a], grads[a]);
    }
    cum_grad_norm_sq += grad_norm_sq;
    result.max_factor_bound_term = std::max(result.max_factor_bound_term, bound_term);
    result.min_loss = std::min(result.min_loss, loss);
    if (t == 0) result.initial_loss = loss;

    if (t % config.record_every == 0 || t == config.steps - 1) {
      result.records.push_back({t, loss, grad_norm_sq, cum_grad_norm_sq / (t + 1)});
    }

    for (std::size_t a = 0; a < adapters.size(); ++a) sgd_step(adapters[a], grads[a], config.eta);
  }

  result.final_loss = task.evaluate(adapters, full_batch, nullptr);
  result.min_loss = std::min(result.min_loss, result.final_loss);
  result.avg_grad_norm_sq = cum_grad_norm_sq / config.steps;
  return result;
}

TrainResult run_training(const TrainConfig& config, MixtureAdapter& adapter,
                         const AdaptationTask& task) {
  std::vector<MixtureAdapter> adapters = {adapter};
  TrainResult result = run_training(config, adapters, task);
  adapter = std::move(adapters[0]);
  return result;
}

double convergence_bound(double gap, double smoothness, double grad_bound, double eta, int steps) {
  assert(eta > 0.0 && steps > 0);
  return gap / (eta * steps) + eta * smoothness * grad_bound / 2.0;
}

double optimal_eta(double gap, double smoothness, double grad_bound, int steps) {
  assert(gap > 0.0 && smoothness > 0.0 && grad_bound > 0.0 && steps > 0);
  return std::sqrt(2.0 * gap / (smoothness * grad_bound * steps));
}

BoundReport convergence_diagnostic(const std::vector<TrainRecord>& records, double gap,
                                   double smoothness, double grad_bound, double eta, int steps) {
  if (records.empty()) throw std::invalid_argument("convergence_diagnostic: no records");
  BoundReport report;
  report.gap = gap;
  report.smoothness = smoothness;
  report.grad_bound = grad_bound;
  report.eta = eta;
  report.steps = steps;
  report.bound = convergence_bound(gap, smoothness, grad_bound, eta, steps);
  report.measured_avg = records.back().cum_mean_grad_norm_sq;
  report.eta_star = (gap > 0.0 && smoothness > 0.0 && grad_bound > 0.0)
                        ? optimal_eta(gap, smoothness, grad_bound, steps)
                        : 0.0;
  report.violated = report.measured_avg > report.bound * (1.0 + 1e-6);
  return report;
}

Index trainable_param_count(const MixtureAdapter& adapter) {
  Index count = 0;
  for (const auto& pair : adapter.pairs) count += pair.trainable_params();
  if (adapter.gated) count += adapter.pair_count();
  return count;
}

Index trainable_param_count(const std::vector<MixtureAdapter>& adapters) {
  Index count = 0;
  for (const auto& adapter : adapters) count += trainable_param_count(adapter);
  return count;
}

Vector pack_param_gradients(const std::vector<AdapterGradients>& grads,
                            const std::vector<MixtureAdapter>& adapters) {
  Vector packed(trainable_param_count(adapters));
  Index at = 0;
  for (std::size_t a = 0; a < adapters.size(); ++a) {
    const auto& adapter = adapters[a];
    for (Index i = 0; i < adapter.pair_count(); ++i) {
      const auto& pg = grads[a].pairs[i];
      if (!adapter.pairs[i].identity_a) {
        Eigen::Map<Vector>(packed.data() + at, pg.d_a.size()) =
            Eigen::Map<const Vector>(pg.d_a.data(), pg.d_a.size());
        at += pg.d_a.size();
      }
      Eigen::Map<Vector>(packed.data() + at, pg.d_b.size()) =
          Eigen::Map<const Vector>(pg.d_b.data(), pg.d_b.size());
      at += pg.d_b.size();
    }
    if (adapter.gated) {
      packed.segment(at, adapter.pair_count()) = grads[a].d_gate_logits;
      at += adapter.pair_count();
    }
  }
  return packed;
}

void add_to_params(std::vector<MixtureAdapter>& adapters, const Vector& direction, double scale) {
  if (direction.size() != trainable_param_count(adapters)) {
    throw ShapeError("add_to_params: direction length mismatch");
  }
  Index at = 0;
  for (auto& adapter : adapters) {
    for (auto& pair : adapter.pairs) {
      if (!pair.identity_a) {
        Eigen::Map<Matrix>(pair.a.data(), pair.a.rows(), pair.a.cols()) +=
            scale *
            Eigen::Map<const Matrix>(direction.data() + at, pair.a.rows(), pair.a.cols());
        at += pair.a.size();
      }
      Eigen::Map<Matrix>(pair.b.data(), pair.b.rows(), pair.b.cols()) +=
          scale * Eigen::Map<const Matrix>(direction.data() + at, pair.b.rows(), pair.b.cols());
      at += pair.b.size();
    }
    if (adapter.gated) {
      adapter.gate_logits += scale * direction.segment(at, adapter.pair_count());
      at += adapter.pair_count();
    }
  }
}

double estimate_smoothness(const AdaptationTask& task, const std::vector<MixtureAdapter>& adapters,
                           std::uint64_t seed, int max_iters, double tol) {
  const Index dim = trainable_param_count(adapters);
  std::vector<Index> full_batch(task.probe_count());
  std::iota(full_batch.begin(), full_batch.end(), Index{0});

  std::vector<AdapterGradients> grads;
  task.evaluate(adapters, full_batch, &grads);
  const Vector grad_base = pack_param_gradients(grads, adapters);

  SplitRng rng(seed, Stream::kPower);
  Vector direction = rng.gaussian_vector(dim);
  direction.normalize();

  double lambda = 0.0;
  for (int iter = 0; iter < max_iters; ++iter) {
    std::vector<MixtureAdapter> shifted = adapters;
    add_to_params(shifted, direction, 1.0);
    task.evaluate(shifted, full_batch, &grads);
    const Vector mapped = pack_param_gradients(grads, shifted) - grad_base;
    const double norm = mapped.norm();
    if (norm == 0.0) return 0.0;
    const double lambda_next = norm;  // = ||K v|| for unit v
    direction = mapped / norm;
    if (iter > 0 && std::abs(lambda_next - lambda) <= tol * std::max(1.0, lambda_next)) {
      lambda = lambda_next;
      break;
    }
    lambda = lambda_next;
  }
  return lambda;
}

double estimate_min_loss(const AdaptationTask& task, std::vector<MixtureAdapter> adapters,
                         double eta, int steps, std::uint64_t seed) {
  TrainConfig config;
  config.eta = eta;
  config.steps = steps;
  config.batch_size = static_cast<int>(task.probe_count());  // full batch
  config.seed = seed;
  config.record_every = steps;  // records are irrelevant here
  const TrainResult result = run_training(config, adapters, task);
  return result.min_loss;
}

DiagnosticCalibration calibrate_diagnostic(const AdaptationTask& task,
                                           const std::vector<MixtureAdapter>& adapters0,
                                           int steps, std::uint64_t seed) {
  DiagnosticCalibration cal;
  cal.smoothness = estimate_smoothness(task, adapters0, seed);
  if (cal.smoothness <= 0.0) {
    throw std::invalid_argument("calibrate_diagnostic: task has no measurable curvature");
  }
  const double eta_safe = 1.0 / cal.smoothness;

  TrainConfig pilot;
  pilot.eta = eta_safe;
  pilot.steps = steps;
  pilot.batch_size = static_cast<int>(task.probe_count());
  pilot.seed = seed;
  pilot.record_every = steps;
  std::vector<MixtureAdapter> pilot_adapters = adapters0;
  const TrainResult pilot_result = run_training(pilot, pilot_adapters, task);

  const int long_horizon = std::min(std::max(10 * steps, 2000), 20000);
  const double long_min = estimate_min_loss(task, adapters0, eta_safe, long_horizon, seed);

  cal.initial_loss = pilot_result.initial_loss;
  cal.min_loss = std::min(long_min, pilot_result.min_loss);
  cal.gap = cal.initial_loss - cal.min_loss;
  cal.grad_bound = pilot_result.max_factor_bound_term;
  cal.eta_star = (cal.gap > 0.0 && cal.grad_bound > 0.0)
                     ? optimal_eta(cal.gap, cal.smoothness, cal.grad_bound, steps)
                     : 0.0;
  return cal;
}

}  // namespace moka
