#include "moka/grad.hpp"

#include <algorithm>
#include <cmath>

namespace moka {

namespace {

using ColMajorMap = Eigen::Map<const Eigen::MatrixXd>;

double rel_err(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace

AdapterGradients backward_mixture(const MixtureAdapter& adapter, const Vector& x,
                                  const Vector& upstream) {
  if (x.size() != adapter.in_dim) {
    throw ShapeError("backward_mixture: input length " + std::to_string(x.size()) + " != n = " +
                     std::to_string(adapter.in_dim));
  }
  if (upstream.size() != adapter.out_dim) {
    throw ShapeError("backward_mixture: upstream length " + std::to_string(upstream.size()) +
                     " != m = " + std::to_string(adapter.out_dim));
  }
  const Index r = adapter.pair_count();
  const Vector alpha = gates(adapter);

  AdapterGradients grads;
  grads.pairs.resize(r);
  grads.d_gate_logits = Vector::Zero(r);
  grads.d_x = Vector::Zero(adapter.in_dim);

  Vector pair_scores(r);  // <upstream, unweighted pair output>
  for (Index i = 0; i < r; ++i) {
    const auto& pair = adapter.pairs[i];
    detail::check_pair_dims(pair, adapter.in_dim, adapter.out_dim, i);

    // Padding the upstream is the adjoint of truncating the output.
    const Vector x_pad = pad_vector(x, pair.in_capacity());
    const Vector g_pad = pad_vector(upstream, pair.out_capacity());
    const ColMajorMap reshaped_x(x_pad.data(), pair.n_b(), pair.n_a());
    const ColMajorMap reshaped_g(g_pad.data(), pair.m_b(), pair.m_a());

    Matrix dx_block;
    if (pair.identity_a) {
      grads.pairs[i].d_b.noalias() = alpha[i] * (reshaped_g * reshaped_x.transpose());
      dx_block.noalias() = pair.b.transpose() * reshaped_g;
    } else {
      grads.pairs[i].d_b.noalias() = alpha[i] * (reshaped_g * pair.a * reshaped_x.transpose());
      grads.pairs[i].d_a.noalias() = alpha[i] * (reshaped_g.transpose() * pair.b * reshaped_x);
      dx_block.noalias() = pair.b.transpose() * reshaped_g * pair.a;
    }
    grads.d_x += alpha[i] * truncate_vector(vec_matrix(dx_block), adapter.in_dim);
    pair_scores[i] = upstream.dot(apply_pair(pair, x, adapter.in_dim, adapter.out_dim));
  }

  if (adapter.gated) {
    const double mean_score = alpha.dot(pair_scores);
    grads.d_gate_logits = (alpha.array() * (pair_scores.array() - mean_score)).matrix();
  }
  return grads;
}

AdapterGradients zero_gradients_like(const MixtureAdapter& adapter) {
  AdapterGradients grads;
  grads.pairs.resize(adapter.pair_count());
  for (Index i = 0; i < adapter.pair_count(); ++i) {
    const auto& pair = adapter.pairs[i];
    if (!pair.identity_a) grads.pairs[i].d_a = Matrix::Zero(pair.m_a(), pair.n_a());
    grads.pairs[i].d_b = Matrix::Zero(pair.m_b(), pair.n_b());
  }
  grads.d_gate_logits = Vector::Zero(adapter.pair_count());
  grads.d_x = Vector::Zero(adapter.in_dim);
  return grads;
}

void accumulate(AdapterGradients& dst, const AdapterGradients& src) {
  for (std::size_t i = 0; i < dst.pairs.size(); ++i) {
    if (src.pairs[i].d_a.size() > 0) dst.pairs[i].d_a += src.pairs[i].d_a;
    dst.pairs[i].d_b += src.pairs[i].d_b;
  }
  dst.d_gate_logits += src.d_gate_logits;
  dst.d_x += src.d_x;
}

void scale_gradients(AdapterGradients& grads, double factor) {
  for (auto& pg : grads.pairs) {
    if (pg.d_a.size() > 0) pg.d_a *= factor;
    pg.d_b *= factor;
  }
  grads.d_gate_logits *= factor;
  grads.d_x *= factor;
}

double squared_param_grad_norm(const AdapterGradients& grads) {
  double total = 0.0;
  for (const auto& pg : grads.pairs) {
    total += pg.d_a.squaredNorm();
    total += pg.d_b.squaredNorm();
  }
  total += grads.d_gate_logits.squaredNorm();
  return total;
}

double factor_grad_bound_term(const MixtureAdapter& adapter, const AdapterGradients& grads) {
  double total = 0.0;
  for (Index i = 0; i < adapter.pair_count(); ++i) {
    const auto& pair = adapter.pairs[i];
    const double a_sq = pair.identity_a ? static_cast<double>(pair.a_dim) : pair.a.squaredNorm();
    total += grads.pairs[i].d_a.squaredNorm() * pair.b.squaredNorm();
    total += a_sq * grads.pairs[i].d_b.squaredNorm();
  }
  return total;
}

namespace {

struct FdProbe {
  std::string block;
  double analytic = 0.0;
  std::function<double(double)> loss_at;  // loss with the scalar moved to the given value
  double base = 0.0;
};

void collect_param_probes(const MixtureAdapter& adapter, const Vector& x,
                          const std::function<double(const Vector&)>& loss,
                          const AdapterGradients& analytic, std::vector<FdProbe>& probes) {
  for (Index i = 0; i < adapter.pair_count(); ++i) {
    const auto& pair = adapter.pairs[i];
    if (!pair.identity_a) {
      for (Index r = 0; r < pair.m_a(); ++r)
        for (Index c = 0; c < pair.n_a(); ++c) {
          probes.push_back(
              {"A[" + std::to_string(i) + "]", analytic.pairs[i].d_a(r, c),
               [&adapter, &x, &loss, i, r, c](double value) {
                 MixtureAdapter perturbed = adapter;
                 perturbed.pairs[i].a(r, c) = value;
                 return loss(apply_mixture(perturbed, x));
               },
               pair.a(r, c)});
        }
    }
    for (Index r = 0; r < pair.m_b(); ++r)
      for (Index c = 0; c < pair.n_b(); ++c) {
        probes.push_back(
            {"B[" + std::to_string(i) + "]", analytic.pairs[i].d_b(r, c),
             [&adapter, &x, &loss, i, r, c](double value) {
               MixtureAdapter perturbed = adapter;
               perturbed.pairs[i].b(r, c) = value;
               return loss(apply_mixture(perturbed, x));
             },
             pair.b(r, c)});
      }
  }
  if (adapter.gated) {
    for (Index i = 0; i < adapter.pair_count(); ++i) {
      probes.push_back({"gates", analytic.d_gate_logits[i],
                        [&adapter, &x, &loss, i](double value) {
                          MixtureAdapter perturbed = adapter;
                          perturbed.gate_logits[i] = value;
                          return loss(apply_mixture(perturbed, x));
                        },
                        adapter.gate_logits[i]});
    }
  }
  for (Index i = 0; i < x.size(); ++i) {
    probes.push_back({"x", analytic.d_x[i],
                      [&adapter, &x, &loss, i](double value) {
                        Vector perturbed = x;
                        perturbed[i] = value;
                        return loss(apply_mixture(adapter, perturbed));
                      },
                      x[i]});
  }
}

}  // namespace

FdReport finite_difference_compare(const MixtureAdapter& adapter, const Vector& x,
                                   const std::function<double(const Vector&)>& loss,
                                   const AdapterGradients& analytic, double eps) {
  std::vector<FdProbe> probes;
  collect_param_probes(adapter, x, loss, analytic, probes);

  FdReport report;
  auto block_of = [&report](const std::string& name) -> FdBlockResult& {
    for (auto& b : report.blocks)
      if (b.block == name) return b;
    report.blocks.push_back({name, 0.0});
    return report.blocks.back();
  };

  for (const FdProbe& probe : probes) {
    const double up = probe.loss_at(probe.base + eps);
    const double down = probe.loss_at(probe.base - eps);
    const double numeric = (up - down) / (2.0 * eps);
    const double err = rel_err(probe.analytic, numeric);
    FdBlockResult& block = block_of(probe.block);
    block.max_rel_err = std::max(block.max_rel_err, err);
    report.worst = std::max(report.worst, err);
  }
  return report;
}

FdReport finite_difference_check(const MixtureAdapter& adapter, const Vector& x,
                                 const std::function<double(const Vector&)>& loss,
                                 const std::function<Vector(const Vector&)>& loss_grad,
                                 double eps) {
  const Vector output = apply_mixture(adapter, x);
  const AdapterGradients analytic = backward_mixture(adapter, x, loss_grad(output));
  return finite_difference_compare(adapter, x, loss, analytic, eps);
}

}  // namespace moka
