#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "moka/adapter.hpp"

namespace moka {

struct ProjectionSpec {
  std::string name;
  Index m = 0;
  Index n = 0;

  friend bool operator==(const ProjectionSpec&, const ProjectionSpec&) = default;
};

// Which layers get adapters and with what factor geometry. pair_shapes is
// parallel to projections; the whole set repeats layer_count times.
struct ShapeConfig {
  std::string model_name;  // llama2-7b | llama3-8b | custom
  std::string variant;     // moka | moka_s | moka_s-qonly | custom
  Index layer_count = 1;
  std::vector<ProjectionSpec> projections;
  std::vector<std::vector<PairShape>> pair_shapes;

  friend bool operator==(const ShapeConfig&, const ShapeConfig&) = default;
};

struct ShapeViolation {
  std::string projection;
  Index pair_index = -1;
  std::string detail;
};

// The 25 primes in [lo, hi]; the block-diagonal variant uses [2, 97].
std::vector<Index> primes_in_range(Index lo, Index hi);

// Built-in model configurations; throws ConfigError for unknown names.
ShapeConfig builtin_shape_config(const std::string& model, const std::string& variant);
bool is_builtin_model(const std::string& model);
bool is_known_variant(const std::string& variant);

// Trainable scalars: per projection sum of factor entries (identity A
// contributes none) plus one gate logit per pair, times layer_count.
std::int64_t count_trainable_params(const ShapeConfig& config);

// Empty iff every pair covers its projection's dims. Violations are data.
std::vector<ShapeViolation> validate_config(const ShapeConfig& config);

// "5243520 (5.2M)"
std::string format_param_count(std::int64_t count);

// Reference counts for the built-in configurations, where established.
std::optional<std::int64_t> expected_param_count(const std::string& model,
                                                 const std::string& variant);

}  // namespace moka
