// Acceptance suite: one line per criterion, nonzero exit when any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "moka/cli.hpp"
#include "moka/config.hpp"
#include "moka/metrics.hpp"
#include "moka/trainer.hpp"
#include "moka/bench.hpp"
#include "oracles.hpp"

using namespace moka;

namespace {

struct Failure {
  std::string message;
};

void require(bool ok, const std::string& message) {
  if (!ok) throw Failure{message};
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::filesystem::path scratch_dir(const std::string& leaf) {
  const auto dir = std::filesystem::temp_directory_path() / "moka_acceptance" / leaf;
  std::filesystem::create_directories(dir);
  return dir;
}

// ---- criterion bodies ------------------------------------------------

void criterion_param_counts() {
  const struct {
    const char* model;
    const char* variant;
    std::int64_t exact;
    const char* printed;
  } cases[] = {
      {"llama2-7b", "moka", 5243520, "5243520 (5.2M)"},
      {"llama2-7b", "moka_s", 4212544, "4212544 (4.2M)"},
      {"llama3-8b", "moka", 3932800, "3932800 (3.9M)"},
  };
  for (const auto& c : cases) {
    const ShapeConfig config = builtin_shape_config(c.model, c.variant);
    require(count_trainable_params(config) == c.exact,
            std::string(c.model) + " " + c.variant + ": wrong exact count");
    std::ostringstream out;
    require(cli::cmd_count({c.model, c.variant}, out) == cli::kExitOk,
            std::string(c.model) + " " + c.variant + ": count command failed");
    require(out.str().find(c.printed) != std::string::npos,
            std::string(c.model) + " " + c.variant + ": rounded figure mismatch");
  }
}

void criterion_oracle_equivalence() {
  int instances = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 1; instances < 200; ++seed) {
    SplitRng rng(seed, Stream::kSweep);
    const Index max_dim = 2 + rng.uniform_index(15);  // factor dims <= 16
    const MixtureAdapter adapter = random_mixture(rng, max_dim, 1 + rng.uniform_index(4));
    const Vector x = rng.gaussian_vector(adapter.in_dim);
    const Vector fast = apply_mixture(adapter, x);
    const Vector slow = oracles::naive_matvec(materialize_delta(adapter), x);
    worst = std::max(worst, (fast - slow).cwiseAbs().maxCoeff());
    ++instances;
  }
  require(worst <= 1e-10, "max abs diff " + format_f64(worst) + " > 1e-10 over 200 instances");
}

void criterion_gradients() {
  double worst = 0.0;
  for (std::uint64_t seed = 100; seed < 120; ++seed) {  // 20 instances
    SplitRng rng(seed, Stream::kSweep);
    const MixtureAdapter adapter = random_mixture(rng, 6, 1 + rng.uniform_index(3));
    const Vector x = rng.gaussian_vector(adapter.in_dim);
    const Vector direction = rng.gaussian_vector(adapter.out_dim);
    const FdReport report = finite_difference_check(
        adapter, x,
        [&direction](const Vector& y) { return 0.5 * y.squaredNorm() + direction.dot(y); },
        [&direction](const Vector& y) { return Vector(y + direction); });
    for (const FdBlockResult& block : report.blocks) {
      require(block.max_rel_err <= 1e-5,
              "block " + block.block + " rel err " + format_f64(block.max_rel_err) + " > 1e-5");
    }
    worst = std::max(worst, report.worst);
  }

  const std::vector<PairShape> shapes = {{2, 4, 4, 2, false}, {4, 2, 2, 4, false}};
  const ToyAttentionTask attention = make_toy_attention(4, 8, shapes, 3, 5);
  std::vector<MixtureAdapter> adapters = attention.initial_adapters();
  SplitRng rng(9, Stream::kSweep);
  for (auto& adapter : adapters) {
    for (auto& pair : adapter.pairs) pair.b = rng.gaussian_matrix(pair.m_b(), pair.n_b()) * 0.3;
    adapter.gate_logits = rng.gaussian_vector(adapter.pair_count()) * 0.5;
  }
  const double attention_worst = oracles::fd_task_check(attention, adapters, 1e-5);
  require(attention_worst <= 1e-4,
          "attention-block FD rel err " + format_f64(attention_worst) + " > 1e-4");
}

void criterion_algebraic_laws() {
  SplitRng rng(210, Stream::kSweep);
  for (int rep = 0; rep < 40; ++rep) {
    const Matrix a = rng.gaussian_matrix(1 + rng.uniform_index(16), 1 + rng.uniform_index(16));
    const Matrix b = rng.gaussian_matrix(1 + rng.uniform_index(16), 1 + rng.uniform_index(16));
    const double product = frobenius_norm(Matrix(kron_explicit(a, b)));
    const double factors = frobenius_norm(a) * frobenius_norm(b);
    require(std::abs(product - factors) <= 1e-12 * factors, "Frobenius multiplicativity broke");
  }

  for (Index rank_a = 1; rank_a <= 3; ++rank_a) {
    for (Index rank_b = 1; rank_b <= 3; ++rank_b) {
      for (int rep = 0; rep < 4; ++rep) {
        const Index da = rank_a + rng.uniform_index(8 - rank_a + 1);
        const Index db = rank_b + rng.uniform_index(8 - rank_b + 1);
        const Matrix a = oracles::planted_rank_matrix(rng, da, da, rank_a);
        const Matrix b = oracles::planted_rank_matrix(rng, db, db, rank_b);
        require(numeric_rank(a) == rank_a && numeric_rank(b) == rank_b,
                "planted factor rank drifted");
        require(numeric_rank(Matrix(kron_explicit(a, b))) == rank_a * rank_b,
                "rank multiplicativity broke");
      }
    }
  }

  for (int rep = 0; rep < 40; ++rep) {
    MixtureAdapter adapter;
    const Index r = 1 + rng.uniform_index(6);
    adapter.pairs.resize(r);
    adapter.gate_logits = rng.gaussian_vector(r) * 20.0;
    adapter.in_dim = adapter.out_dim = 1;
    const Vector alpha = gates(adapter);
    require(std::abs(alpha.sum() - 1.0) <= 1e-12, "gate simplex broke");
    require(alpha.minCoeff() > 0.0, "gate positivity broke");
    MixtureAdapter shifted = adapter;
    shifted.gate_logits.array() += rng.uniform(-75.0, 75.0);
    require((gates(shifted) - alpha).cwiseAbs().maxCoeff() <= 1e-12, "gate shift invariance broke");
  }
}

void criterion_planted_recovery() {
  const std::vector<PairShape> shapes = {{4, 4, 4, 4, false}, {4, 4, 4, 4, false}};
  const PlantedTask task = make_planted(shapes, 16, 16, 32, 42);
  std::vector<MixtureAdapter> adapters = task.initial_adapters();
  TrainConfig config;
  config.eta = 0.05;
  config.steps = 5000;
  config.batch_size = 32;  // covers all probes: full batch
  config.seed = 42;
  config.record_every = 100;
  const TrainResult result = run_training(config, adapters, task);
  require(result.final_loss < 1e-6,
          "final loss " + format_f64(result.final_loss) + " not below 1e-6 in 5000 steps");
  const double delta_err = (materialize_delta(adapters[0]) - task.target_delta()).norm();
  require(delta_err <= 1e-3,
          "materialized update misses the target by " + format_f64(delta_err) + " Frobenius");
}

void criterion_convergence_bound() {
  const PlantedTask task = make_planted({{4, 4, 4, 4, true}}, 16, 16, 48, 7);
  const std::vector<MixtureAdapter> adapters0 = task.initial_adapters();
  const int steps = 400;
  const DiagnosticCalibration cal = calibrate_diagnostic(task, adapters0, steps, 7);
  require(cal.gap > 0.0 && cal.smoothness > 0.0 && cal.grad_bound > 0.0, "degenerate calibration");

  // eta* equalizes the two bound terms ...
  const double term1 = cal.gap / (cal.eta_star * steps);
  const double term2 = cal.eta_star * cal.smoothness * cal.grad_bound / 2.0;
  require(std::abs(term1 - term2) <= 1e-12 * std::max(term1, term2),
          "eta* term equality off: " + format_f64(term1) + " vs " + format_f64(term2));
  // ... and minimizes the bound over the 5-point grid
  const double at_star = convergence_bound(cal.gap, cal.smoothness, cal.grad_bound, cal.eta_star, steps);
  for (const double mult : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    const double grid = convergence_bound(cal.gap, cal.smoothness, cal.grad_bound,
                                       mult * cal.eta_star, steps);
    require(at_star <= grid * (1.0 + 1e-15), "eta* does not minimize the bound on the grid");
  }

  for (const double mult : {0.25, 1.0, 4.0}) {
    const double eta = mult * cal.eta_star;
    TrainConfig config;
    config.eta = eta;
    config.steps = steps;
    config.batch_size = 48;
    config.seed = 7;
    config.record_every = 1;
    std::vector<MixtureAdapter> adapters = adapters0;
    const TrainResult result = run_training(config, adapters, task);
    // the running average must sit under the bound at every horizon
    for (const TrainRecord& record : result.records) {
      const double bound = convergence_bound(cal.gap, cal.smoothness, result.max_factor_bound_term,
                                          eta, record.step + 1);
      require(record.cum_mean_grad_norm_sq <= bound * (1.0 + 1e-6),
              "running average exceeds the bound at eta multiplier " + format_f64(mult) +
                  ", step " + std::to_string(record.step));
    }
    const BoundReport report = convergence_diagnostic(result.records, cal.gap, cal.smoothness,
                                                      result.max_factor_bound_term, eta, steps);
    require(!report.violated, "bound report flags a violation at multiplier " + format_f64(mult));
  }
}

void criterion_identity_fastpath() {
  SplitRng rng(33, Stream::kSweep);
  for (int rep = 0; rep < 60; ++rep) {
    const Index p = 2 + rng.uniform_index(12);
    const Index n = 1 + rng.uniform_index(60);
    const Index order = (n + p - 1) / p;
    const Index m = std::max<Index>(1, order * p - rng.uniform_index(p));
    const KronFactorPair fast = KronFactorPair::identity(order, rng.gaussian_matrix(p, p));
    const KronFactorPair slow = with_explicit_identity(fast);
    const Vector x = rng.gaussian_vector(n);
    const Vector fast_y = apply_pair(fast, x, n, m);
    const Vector slow_y = apply_pair(slow, x, n, m);
    require(fast_y.size() == slow_y.size() &&
                std::memcmp(fast_y.data(), slow_y.data(), sizeof(double) * fast_y.size()) == 0,
            "fast path diverges bitwise at instance " + std::to_string(rep));
  }
}

void criterion_reformulation_efficiency() {
  const PairShape shape{64, 64, 64, 64, false};
  require(reformulated_flops(shape) == 1048576, "reformulated flop model off");
  require(explicit_matvec_flops(4096, 4096) == 33554432, "explicit flop model off");
  const BenchRow row = run_bench_case(shape, 7, 7, true);
  require(row.flop_ratio == 32.0, "flop ratio is not exactly 32");
  require(row.max_abs_diff <= 1e-10, "bench arms disagree");
  require(row.time_ratio >= 5.0,
          "measured wall-time ratio " + format_f64(row.time_ratio) + " below the 5x floor");
}

void criterion_determinism() {
  const auto dir = scratch_dir("determinism");
  const TrainRunConfig train_config = parse_train_config(slurp("configs/planted_sample.conf"));
  TrainRunConfig quick = train_config;
  quick.steps = 200;
  quick.record_every = 20;
  const auto config_path = dir / "quick.conf";
  {
    std::ofstream out(config_path, std::ios::binary);
    out << serialize_train_config(quick);
  }

  std::ostringstream sink;
  const auto run_a = dir / "run_a";
  const auto run_b = dir / "run_b";
  require(cli::cmd_train({config_path.string(), run_a.string()}, sink) == cli::kExitOk,
          "train run a failed");
  require(cli::cmd_train({config_path.string(), run_b.string()}, sink) == cli::kExitOk,
          "train run b failed");
  require(slurp(run_a / "train_records.csv") == slurp(run_b / "train_records.csv"),
          "train CSV differs across reruns");
  require(!slurp(run_a / "train_records.csv").empty(), "train CSV is empty");
  require(slurp(run_a / "bound_report.json") == slurp(run_b / "bound_report.json"),
          "bound report differs across reruns");

  cli::BenchOptions bench;
  bench.shapes = "8x8x8x8,16x16x4x4i";
  bench.repeats = 3;
  bench.reproducible = true;
  bench.out_path = (dir / "bench_a.csv").string();
  require(cli::cmd_bench(bench, sink) == cli::kExitOk, "bench run a failed");
  bench.out_path = (dir / "bench_b.csv").string();
  require(cli::cmd_bench(bench, sink) == cli::kExitOk, "bench run b failed");
  require(slurp(dir / "bench_a.csv") == slurp(dir / "bench_b.csv"),
          "bench CSV differs across reruns under the reproducibility flag");

  std::ostringstream verify_a, verify_b;
  VerifyOptions verify_options;
  verify_options.seed = 11;
  verify_options.sizes = {2, 4};
  require(cli::cmd_verify(verify_options, verify_a) == cli::kExitOk, "verify run a failed");
  require(cli::cmd_verify(verify_options, verify_b) == cli::kExitOk, "verify run b failed");
  require(verify_a.str() == verify_b.str(), "verify output differs across reruns");
}

struct Criterion {
  int id;
  std::string title;
  double budget_seconds;
  std::function<void()> body;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "parameter counts match the reported figures", 1.0, criterion_param_counts},
      {2, "oracle equivalence over 200 random instances", 30.0, criterion_oracle_equivalence},
      {3, "gradients match central finite differences", 60.0, criterion_gradients},
      {4, "algebraic laws: norms, ranks, gates", 30.0, criterion_algebraic_laws},
      {5, "planted recovery to loss < 1e-6", 120.0, criterion_planted_recovery},
      {6, "averaged gradient norms obey the convergence bound", 120.0, criterion_convergence_bound},
      {7, "identity fast path is bitwise exact", 30.0, criterion_identity_fastpath},
      {8, "reformulated apply beats the explicit baseline", 60.0, criterion_reformulation_efficiency},
      {9, "seeded reruns are byte-identical", 120.0, criterion_determinism},
  };

  int failures = 0;
  for (const Criterion& criterion : criteria) {
    const auto start = std::chrono::steady_clock::now();
    std::string error;
    try {
      criterion.body();
    } catch (const Failure& f) {
      error = f.message;
    } catch (const std::exception& e) {
      error = e.what();
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (error.empty() && elapsed > criterion.budget_seconds) {
      error = "runtime " + std::to_string(elapsed) + "s exceeds the " +
              std::to_string(criterion.budget_seconds) + "s budget";
    }
    std::printf("[%s] criterion %d: %s (%.2fs)%s%s\n", error.empty() ? "PASS" : "FAIL",
                criterion.id, criterion.title.c_str(), elapsed, error.empty() ? "" : " -- ",
                error.c_str());
    if (!error.empty()) ++failures;
  }
  std::printf("acceptance: %d/%d criteria passed\n",
              static_cast<int>(criteria.size()) - failures, static_cast<int>(criteria.size()));
  return failures == 0 ? 0 : 1;
}
