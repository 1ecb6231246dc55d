#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moka/shapes.hpp"

namespace moka {

// Flat key-value config text: `key = value` lines, `#` comments, repeated
// `[pair]` (and, for shape files, `[projection]`) sections. Unknown keys
// are rejected with line diagnostics.

struct ConfigEntry {
  int line = 0;
  std::string key;
  std::string value;
};

struct ConfigSection {
  int line = 0;
  std::string name;
  std::vector<ConfigEntry> entries;
};

struct FlatConfig {
  std::vector<ConfigEntry> globals;
  std::vector<ConfigSection> sections;
};

FlatConfig parse_flat_config(const std::string& text);

// Parameters of one `train` run.
struct TrainRunConfig {
  std::uint64_t seed = 0;
  double eta = 2e-4;
  int steps = 1000;
  int batch_size = 32;
  int record_every = 1;
  std::string task;  // planted | frozen_linear | toy_attention
  Index m = 0;
  Index n = 0;
  Index probes = 32;
  double rho = 1.0;    // frozen_linear
  Index seq_len = 4;   // toy_attention
  Index model_dim = 8; // toy_attention
  bool gated = true;
  std::vector<PairShape> pairs;

  friend bool operator==(const TrainRunConfig&, const TrainRunConfig&) = default;
};

TrainRunConfig parse_train_config(const std::string& text);
std::string serialize_train_config(const TrainRunConfig& config);

ShapeConfig parse_shape_config(const std::string& text);
std::string serialize_shape_config(const ShapeConfig& config);

std::string read_text_file(const std::string& path);  // throws ConfigError

}  // namespace moka
