#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "moka/grad.hpp"

namespace moka {

// A synthetic adaptation problem: a fixed probe set, a loss over a batch of
// probes, and parameter gradients for every adapter the task trains.
// Task objects are immutable after construction.
class AdaptationTask {
 public:
  virtual ~AdaptationTask() = default;

  virtual const std::string& name() const = 0;
  virtual Index adapter_count() const = 0;
  virtual Index probe_count() const = 0;

  // Freshly initialized adapters, deterministic in the construction seed.
  virtual std::vector<MixtureAdapter> initial_adapters() const = 0;

  // Mean loss over the probes named by batch; when grads is non-null it is
  // filled with one gradient set per adapter (input gradients included).
  virtual double evaluate(const std::vector<MixtureAdapter>& adapters,
                          std::span<const Index> batch,
                          std::vector<AdapterGradients>* grads) const = 0;
};

// Regression onto a target update that is exactly representable by the
// adapter's shape set, so the minimum loss is zero by construction.
class PlantedTask : public AdaptationTask {
 public:
  PlantedTask(std::vector<PairShape> shapes, Index m, Index n, Index probes, std::uint64_t seed,
              bool gated, bool zero_target);

  const std::string& name() const override { return name_; }
  Index adapter_count() const override { return 1; }
  Index probe_count() const override { return probes_.cols(); }
  std::vector<MixtureAdapter> initial_adapters() const override;
  double evaluate(const std::vector<MixtureAdapter>& adapters, std::span<const Index> batch,
                  std::vector<AdapterGradients>* grads) const override;

  const Matrix& target_delta() const { return target_delta_; }
  const MixtureAdapter& target_adapter() const { return target_adapter_; }

 private:
  std::string name_ = "planted";
  std::vector<PairShape> shapes_;
  Index m_, n_;
  std::uint64_t seed_;
  bool gated_;
  MixtureAdapter target_adapter_;
  Matrix target_delta_;
  Matrix probes_;     // n x probe_count
  Matrix target_y_;   // m x probe_count
};

// Regression from a frozen random layer onto that layer plus a dense
// perturbation of Frobenius norm rho; the adapter class generally cannot
// represent the perturbation exactly.
class FrozenLinearTask : public AdaptationTask {
 public:
  FrozenLinearTask(std::vector<PairShape> shapes, Index m, Index n, double rho, Index probes,
                   std::uint64_t seed, bool gated);

  const std::string& name() const override { return name_; }
  Index adapter_count() const override { return 1; }
  Index probe_count() const override { return probes_.cols(); }
  std::vector<MixtureAdapter> initial_adapters() const override;
  double evaluate(const std::vector<MixtureAdapter>& adapters, std::span<const Index> batch,
                  std::vector<AdapterGradients>* grads) const override;

  const Matrix& frozen_weight() const { return w_frozen_; }
  const Matrix& perturbation() const { return perturbation_; }

 private:
  std::string name_ = "frozen_linear";
  std::vector<PairShape> shapes_;
  Index m_, n_;
  std::uint64_t seed_;
  bool gated_;
  Matrix w_frozen_;
  Matrix perturbation_;  // Frobenius norm rho
  Matrix probes_;        // n x probe_count
  Matrix target_y_;      // (w_frozen + perturbation) * probes
};

// Single-head attention block with adapters on the query and value
// projections only; regression onto seeded target sequences. No layer
// norm, no masking, no head splitting.
class ToyAttentionTask : public AdaptationTask {
 public:
  ToyAttentionTask(Index seq_len, Index model_dim, std::vector<PairShape> shapes, Index probes,
                   std::uint64_t seed, bool gated);

  const std::string& name() const override { return name_; }
  Index adapter_count() const override { return 2; }  // q then v
  Index probe_count() const override { return static_cast<Index>(inputs_.size()); }
  std::vector<MixtureAdapter> initial_adapters() const override;
  double evaluate(const std::vector<MixtureAdapter>& adapters, std::span<const Index> batch,
                  std::vector<AdapterGradients>* grads) const override;

  // Forward pass of the block with the given adapters (columns are tokens).
  Matrix forward(const std::vector<MixtureAdapter>& adapters, const Matrix& tokens) const;

  const Matrix& w_q() const { return w_q_; }
  const Matrix& w_k() const { return w_k_; }
  const Matrix& w_v() const { return w_v_; }
  const Matrix& w_o() const { return w_o_; }

 private:
  std::string name_ = "toy_attention";
  Index seq_len_, model_dim_;
  std::vector<PairShape> shapes_;
  std::uint64_t seed_;
  bool gated_;
  Matrix w_q_, w_k_, w_v_, w_o_;
  std::vector<Matrix> inputs_;   // each model_dim x seq_len
  std::vector<Matrix> targets_;  // each model_dim x seq_len
};

PlantedTask make_planted(const std::vector<PairShape>& shapes, Index m, Index n, Index probes,
                         std::uint64_t seed, bool gated = true, bool zero_target = false);
FrozenLinearTask make_frozen_linear(Index m, Index n, double rho,
                                    const std::vector<PairShape>& shapes, Index probes,
                                    std::uint64_t seed, bool gated = true);
ToyAttentionTask make_toy_attention(Index seq_len, Index model_dim,
                                    const std::vector<PairShape>& shapes, Index probes,
                                    std::uint64_t seed, bool gated = true);

}  // namespace moka
