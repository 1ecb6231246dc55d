#include "moka/shapes.hpp"

#include <cstdio>

namespace moka {

namespace {

Index ceil_div(Index a, Index b) { return (a + b - 1) / b; }

// (A_i, B_i) geometries; every shape is used twice per projection.
const std::vector<PairShape>& square_4096_filters() {
  static const std::vector<PairShape> shapes = {
      {64, 64, 64, 64, false},   {32, 128, 128, 32, false}, {128, 32, 32, 128, false},
      {16, 256, 256, 16, false}, {256, 16, 16, 256, false},
  };
  return shapes;
}

const std::vector<PairShape>& value_1024x4096_filters() {
  static const std::vector<PairShape> shapes = {
      {32, 64, 32, 64, false},  {16, 128, 64, 32, false}, {64, 32, 16, 128, false},
      {8, 256, 128, 16, false}, {128, 16, 8, 256, false},
  };
  return shapes;
}

std::vector<PairShape> twice(const std::vector<PairShape>& shapes) {
  std::vector<PairShape> out = shapes;
  out.insert(out.end(), shapes.begin(), shapes.end());
  return out;
}

// Identity-A pairs with B of (rows_per_prime x cols_per_prime) * p; the
// identity order is the smallest that covers both target dims.
std::vector<PairShape> prime_block_filters(Index m, Index n, Index b_row_mult, Index b_col_mult) {
  std::vector<PairShape> out;
  for (Index p : primes_in_range(2, 97)) {
    const Index m_b = b_row_mult * p;
    const Index n_b = b_col_mult * p;
    const Index order = std::max(ceil_div(m, m_b), ceil_div(n, n_b));
    out.push_back({order, order, m_b, n_b, true});
  }
  return out;
}

}  // namespace

std::vector<Index> primes_in_range(Index lo, Index hi) {
  std::vector<Index> primes;
  for (Index candidate = std::max<Index>(2, lo); candidate <= hi; ++candidate) {
    bool prime = true;
    for (Index d = 2; d * d <= candidate; ++d) {
      if (candidate % d == 0) {
        prime = false;
        break;
      }
    }
    if (prime) primes.push_back(candidate);
  }
  return primes;
}

bool is_builtin_model(const std::string& model) {
  return model == "llama2-7b" || model == "llama3-8b";
}

bool is_known_variant(const std::string& variant) {
  return variant == "moka" || variant == "moka_s" || variant == "moka_s-qonly";
}

ShapeConfig builtin_shape_config(const std::string& model, const std::string& variant) {
  if (!is_builtin_model(model)) throw ConfigError("unknown model '" + model + "'");
  if (!is_known_variant(variant)) throw ConfigError("unknown variant '" + variant + "'");

  ShapeConfig config;
  config.model_name = model;
  config.variant = variant;
  config.layer_count = 32;

  const ProjectionSpec q{"q", 4096, 4096};
  const ProjectionSpec v_llama2{"v", 4096, 4096};
  const ProjectionSpec v_llama3{"v", 1024, 4096};

  if (variant == "moka") {
    config.projections = {q, model == "llama2-7b" ? v_llama2 : v_llama3};
    config.pair_shapes.push_back(twice(square_4096_filters()));
    config.pair_shapes.push_back(
        twice(model == "llama2-7b" ? square_4096_filters() : value_1024x4096_filters()));
  } else if (variant == "moka_s") {
    config.projections = {q, model == "llama2-7b" ? v_llama2 : v_llama3};
    config.pair_shapes.push_back(prime_block_filters(q.m, q.n, 1, 1));
    config.pair_shapes.push_back(model == "llama2-7b"
                                     ? prime_block_filters(v_llama2.m, v_llama2.n, 1, 1)
                                     : prime_block_filters(v_llama3.m, v_llama3.n, 1, 4));
  } else {  // moka_s-qonly: prime blocks on the query projection alone
    config.projections = {q};
    config.pair_shapes.push_back(prime_block_filters(q.m, q.n, 1, 1));
  }
  return config;
}

std::int64_t count_trainable_params(const ShapeConfig& config) {
  std::int64_t per_layer = 0;
  for (const auto& shapes : config.pair_shapes) {
    std::int64_t projection_params = static_cast<std::int64_t>(shapes.size());  // gate logits
    for (const PairShape& s : shapes) {
      if (!s.identity_a) projection_params += static_cast<std::int64_t>(s.m_a) * s.n_a;
      projection_params += static_cast<std::int64_t>(s.m_b) * s.n_b;
    }
    per_layer += projection_params;
  }
  return per_layer * config.layer_count;
}

std::vector<ShapeViolation> validate_config(const ShapeConfig& config) {
  std::vector<ShapeViolation> violations;
  if (config.projections.size() != config.pair_shapes.size()) {
    violations.push_back({"", -1, "projection and pair-shape lists differ in length"});
    return violations;
  }
  if (config.layer_count < 1) violations.push_back({"", -1, "layer_count must be >= 1"});
  for (std::size_t p = 0; p < config.projections.size(); ++p) {
    const ProjectionSpec& proj = config.projections[p];
    if (proj.m < 1 || proj.n < 1) {
      violations.push_back({proj.name, -1, "projection dims must be >= 1"});
      continue;
    }
    for (std::size_t i = 0; i < config.pair_shapes[p].size(); ++i) {
      const PairShape& s = config.pair_shapes[p][i];
      const Index idx = static_cast<Index>(i);
      if (s.m_a < 1 || s.n_a < 1 || s.m_b < 1 || s.n_b < 1) {
        violations.push_back({proj.name, idx, "factor dims must be >= 1"});
        continue;
      }
      if (s.identity_a && s.m_a != s.n_a) {
        violations.push_back({proj.name, idx, "identity factor must be square"});
      }
      if (s.n_a * s.n_b < proj.n) {
        violations.push_back({proj.name, idx,
                              "n_a*n_b = " + std::to_string(s.n_a * s.n_b) + " < n = " +
                                  std::to_string(proj.n)});
      }
      if (s.m_a * s.m_b < proj.m) {
        violations.push_back({proj.name, idx,
                              "m_a*m_b = " + std::to_string(s.m_a * s.m_b) + " < m = " +
                                  std::to_string(proj.m)});
      }
    }
  }
  return violations;
}

std::string format_param_count(std::int64_t count) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%lld (%.1fM)", static_cast<long long>(count),
                static_cast<double>(count) / 1e6);
  return buf;
}

std::optional<std::int64_t> expected_param_count(const std::string& model,
                                                 const std::string& variant) {
  if (model == "llama2-7b" && variant == "moka") return 5243520;
  if (model == "llama2-7b" && variant == "moka_s") return 4212544;
  if (model == "llama3-8b" && variant == "moka") return 3932800;
  if (model == "llama3-8b" && variant == "moka_s-qonly") return 2106272;
  return std::nullopt;
}

}  // namespace moka
