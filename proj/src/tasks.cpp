#include "moka/tasks.hpp"

#include <cmath>

namespace moka {

namespace {

Matrix gaussian_probes(Index dim, Index count, std::uint64_t seed) {
  SplitRng rng(seed, Stream::kProbe);
  return rng.gaussian_matrix(dim, count);
}

// Target mixtures draw gate logits in [-1, 1] so no gate saturates and the
// recovery problem stays well conditioned.
MixtureAdapter draw_target_adapter(const std::vector<PairShape>& shapes, Index m, Index n,
                                   std::uint64_t seed, bool gated) {
  SplitRng rng(seed, Stream::kTarget);
  MixtureAdapter target = make_mixture_adapter(shapes, m, n, rng, gated);
  for (auto& pair : target.pairs) {
    const double b_scale = 1.0 / std::sqrt(static_cast<double>(pair.n_b()));
    pair.b = rng.gaussian_matrix(pair.m_b(), pair.n_b()) * b_scale;
    if (!pair.identity_a) {
      const double a_scale = 1.0 / std::sqrt(static_cast<double>(pair.n_a()));
      pair.a = rng.gaussian_matrix(pair.m_a(), pair.n_a()) * a_scale;
    }
  }
  if (gated) {
    for (Index i = 0; i < target.pair_count(); ++i) target.gate_logits[i] = rng.uniform(-1.0, 1.0);
  }
  return target;
}

}  // namespace

PlantedTask::PlantedTask(std::vector<PairShape> shapes, Index m, Index n, Index probes,
                         std::uint64_t seed, bool gated, bool zero_target)
    : shapes_(std::move(shapes)), m_(m), n_(n), seed_(seed), gated_(gated) {
  target_adapter_ = draw_target_adapter(shapes_, m_, n_, seed_, gated_);
  if (zero_target) {
    for (auto& pair : target_adapter_.pairs) {
      pair.b.setZero();
      if (!pair.identity_a) pair.a.setZero();
    }
  }
  target_delta_ = materialize_delta(target_adapter_);
  probes_ = gaussian_probes(n_, probes, seed_);
  // through the same apply path as evaluation, so an adapter sitting
  // exactly at the target sees exactly zero residuals
  target_y_.resize(m_, probes);
  for (Index b = 0; b < probes; ++b) {
    target_y_.col(b) = apply_mixture(target_adapter_, Vector(probes_.col(b)));
  }
}

std::vector<MixtureAdapter> PlantedTask::initial_adapters() const {
  SplitRng rng(seed_, Stream::kInit);
  return {make_mixture_adapter(shapes_, m_, n_, rng, gated_)};
}

double PlantedTask::evaluate(const std::vector<MixtureAdapter>& adapters,
                             std::span<const Index> batch,
                             std::vector<AdapterGradients>* grads) const {
  const MixtureAdapter& adapter = adapters.at(0);
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  if (grads) {
    grads->clear();
    grads->push_back(zero_gradients_like(adapter));
  }
  double loss = 0.0;
  for (const Index b : batch) {
    const Vector x = probes_.col(b);
    const Vector residual = apply_mixture(adapter, x) - target_y_.col(b);
    loss += 0.5 * residual.squaredNorm();
    if (grads) accumulate((*grads)[0], backward_mixture(adapter, x, inv_batch * residual));
  }
  return loss * inv_batch;
}

FrozenLinearTask::FrozenLinearTask(std::vector<PairShape> shapes, Index m, Index n, double rho,
                                   Index probes, std::uint64_t seed, bool gated)
    : shapes_(std::move(shapes)), m_(m), n_(n), seed_(seed), gated_(gated) {
  SplitRng rng(seed, Stream::kTarget);
  w_frozen_ = rng.gaussian_matrix(m, n) / std::sqrt(static_cast<double>(n));
  Matrix raw = rng.gaussian_matrix(m, n);
  perturbation_ = rho == 0.0 ? Matrix(Matrix::Zero(m, n)) : Matrix(raw * (rho / raw.norm()));
  probes_ = gaussian_probes(n, probes, seed);
  // per-column matvecs, the same kernel the evaluation path uses, so the
  // rho = 0 loss is exactly zero at the zero update
  const Matrix target_map = w_frozen_ + perturbation_;
  target_y_.resize(m, probes);
  for (Index b = 0; b < probes; ++b) target_y_.col(b) = target_map * probes_.col(b);
}

std::vector<MixtureAdapter> FrozenLinearTask::initial_adapters() const {
  SplitRng rng(seed_, Stream::kInit);
  return {make_mixture_adapter(shapes_, m_, n_, rng, gated_)};
}

double FrozenLinearTask::evaluate(const std::vector<MixtureAdapter>& adapters,
                                  std::span<const Index> batch,
                                  std::vector<AdapterGradients>* grads) const {
  const MixtureAdapter& adapter = adapters.at(0);
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  if (grads) {
    grads->clear();
    grads->push_back(zero_gradients_like(adapter));
  }
  double loss = 0.0;
  for (const Index b : batch) {
    const Vector x = probes_.col(b);
    const Vector residual = adapted_forward(w_frozen_, adapter, x) - target_y_.col(b);
    loss += 0.5 * residual.squaredNorm();
    if (grads) accumulate((*grads)[0], backward_mixture(adapter, x, inv_batch * residual));
  }
  return loss * inv_batch;
}

ToyAttentionTask::ToyAttentionTask(Index seq_len, Index model_dim, std::vector<PairShape> shapes,
                                   Index probes, std::uint64_t seed, bool gated)
    : seq_len_(seq_len), model_dim_(model_dim), shapes_(std::move(shapes)), seed_(seed),
      gated_(gated) {
  SplitRng rng(seed, Stream::kTarget);
  const double scale = 1.0 / std::sqrt(static_cast<double>(model_dim));
  w_q_ = rng.gaussian_matrix(model_dim, model_dim) * scale;
  w_k_ = rng.gaussian_matrix(model_dim, model_dim) * scale;
  w_v_ = rng.gaussian_matrix(model_dim, model_dim) * scale;
  w_o_ = rng.gaussian_matrix(model_dim, model_dim) * scale;
  SplitRng probe_rng(seed, Stream::kProbe);
  for (Index p = 0; p < probes; ++p) {
    inputs_.push_back(probe_rng.gaussian_matrix(model_dim, seq_len));
    targets_.push_back(probe_rng.gaussian_matrix(model_dim, seq_len));
  }
}

std::vector<MixtureAdapter> ToyAttentionTask::initial_adapters() const {
  SplitRng rng(seed_, Stream::kInit);
  std::vector<MixtureAdapter> adapters;
  adapters.push_back(make_mixture_adapter(shapes_, model_dim_, model_dim_, rng, gated_));
  adapters.push_back(make_mixture_adapter(shapes_, model_dim_, model_dim_, rng, gated_));
  return adapters;
}

namespace {

// Row-wise softmax with max shift.
Matrix row_softmax(const Matrix& scores) {
  Matrix probs(scores.rows(), scores.cols());
  for (Index r = 0; r < scores.rows(); ++r) {
    const double shift = scores.row(r).maxCoeff();
    const Eigen::ArrayXd w = (scores.row(r).transpose().array() - shift).exp();
    probs.row(r) = (w / w.sum()).matrix().transpose();
  }
  return probs;
}

Vector apply_column(const MatrixX<double>& w, const MixtureAdapter& adapter, const Vector& x) {
  return adapted_forward(w, adapter, x);
}

}  // namespace

Matrix ToyAttentionTask::forward(const std::vector<MixtureAdapter>& adapters,
                                 const Matrix& tokens) const {
  const MixtureAdapter& adapter_q = adapters.at(0);
  const MixtureAdapter& adapter_v = adapters.at(1);
  const Index s = tokens.cols();
  Matrix queries(model_dim_, s), keys(model_dim_, s), values(model_dim_, s);
  for (Index t = 0; t < s; ++t) {
    const Vector x = tokens.col(t);
    queries.col(t) = apply_column(w_q_, adapter_q, x);
    keys.col(t) = w_k_ * x;
    values.col(t) = apply_column(w_v_, adapter_v, x);
  }
  const Matrix scores = queries.transpose() * keys / std::sqrt(static_cast<double>(model_dim_));
  const Matrix probs = row_softmax(scores);
  const Matrix context = values * probs.transpose();
  return w_o_ * context;
}

double ToyAttentionTask::evaluate(const std::vector<MixtureAdapter>& adapters,
                                  std::span<const Index> batch,
                                  std::vector<AdapterGradients>* grads) const {
  const MixtureAdapter& adapter_q = adapters.at(0);
  const MixtureAdapter& adapter_v = adapters.at(1);
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(model_dim_));
  if (grads) {
    grads->clear();
    grads->push_back(zero_gradients_like(adapter_q));
    grads->push_back(zero_gradients_like(adapter_v));
  }

  double loss = 0.0;
  for (const Index b : batch) {
    const Matrix& tokens = inputs_[b];
    const Index s = tokens.cols();

    Matrix queries(model_dim_, s), keys(model_dim_, s), values(model_dim_, s);
    for (Index t = 0; t < s; ++t) {
      const Vector x = tokens.col(t);
      queries.col(t) = apply_column(w_q_, adapter_q, x);
      keys.col(t) = w_k_ * x;
      values.col(t) = apply_column(w_v_, adapter_v, x);
    }
    const Matrix scores = queries.transpose() * keys * inv_sqrt_d;
    const Matrix probs = row_softmax(scores);
    const Matrix context = values * probs.transpose();
    const Matrix output = w_o_ * context;

    const Matrix residual = output - targets_[b];
    loss += 0.5 * residual.squaredNorm() / static_cast<double>(s);
    if (!grads) continue;

    const Matrix d_output = residual * (inv_batch / static_cast<double>(s));
    const Matrix d_context = w_o_.transpose() * d_output;
    // d probs(t,u) = <d context_t, value_u>
    const Matrix d_probs = d_context.transpose() * values;
    Matrix d_values = d_context * probs;
    // softmax backward per row
    Matrix d_scores(s, s);
    for (Index r = 0; r < s; ++r) {
      const double dot = d_probs.row(r).dot(probs.row(r));
      d_scores.row(r) = (probs.row(r).array() * (d_probs.row(r).array() - dot)).matrix();
    }
    d_scores *= inv_sqrt_d;
    const Matrix d_queries = keys * d_scores.transpose();

    for (Index t = 0; t < s; ++t) {
      const Vector x = tokens.col(t);
      accumulate((*grads)[0], backward_mixture(adapter_q, x, d_queries.col(t)));
      accumulate((*grads)[1], backward_mixture(adapter_v, x, d_values.col(t)));
    }
  }
  return loss * inv_batch;
}

PlantedTask make_planted(const std::vector<PairShape>& shapes, Index m, Index n, Index probes,
                         std::uint64_t seed, bool gated, bool zero_target) {
  return PlantedTask(shapes, m, n, probes, seed, gated, zero_target);
}

FrozenLinearTask make_frozen_linear(Index m, Index n, double rho,
                                    const std::vector<PairShape>& shapes, Index probes,
                                    std::uint64_t seed, bool gated) {
  return FrozenLinearTask(shapes, m, n, rho, probes, seed, gated);
}

ToyAttentionTask make_toy_attention(Index seq_len, Index model_dim,
                                    const std::vector<PairShape>& shapes, Index probes,
                                    std::uint64_t seed, bool gated) {
  return ToyAttentionTask(seq_len, model_dim, shapes, probes, seed, gated);
}

}  // namespace moka
