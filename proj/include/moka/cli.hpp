#pragma once

#include <ostream>
#include <string>

#include "moka/verify.hpp"

namespace moka::cli {

// Exit codes: 0 success, 1 numerical/verification failure, 2 usage/config error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitNumerical = 1;
inline constexpr int kExitConfig = 2;

struct CountOptions {
  std::string model;    // llama2-7b | llama3-8b | path to a shape config file
  std::string variant;  // moka | moka_s | moka_s-qonly (ignored for files)
};

struct TrainOptions {
  std::string config_path;
  std::string out_dir = ".";
};

struct BenchOptions {
  std::string shapes = "64x64x64x64";
  int repeats = 5;
  std::string out_path = "bench.csv";
  bool reproducible = false;  // timing cells become nan, output byte-stable
  bool use_f32 = false;
};

int cmd_verify(const VerifyOptions& options, std::ostream& out);
int cmd_count(const CountOptions& options, std::ostream& out);
int cmd_train(const TrainOptions& options, std::ostream& out);
int cmd_bench(const BenchOptions& options, std::ostream& out);

// Comma-separated factor-dim caps for the verify sweeps.
std::vector<Index> parse_size_list(const std::string& csv);

// Full argv interface used by the binary.
int run_cli(int argc, const char* const* argv);

}  // namespace moka::cli
