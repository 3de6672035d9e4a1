#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mowst/confidence.hpp"
#include "mowst/training.hpp"

namespace mowst {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerifyFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitTrainingFailed = 3;

// Where the graph comes from: a document on disk or one of the generators.
struct DataSource {
  std::optional<std::filesystem::path> path;
  std::optional<std::string> generator;  // specialization | blindspot
  std::size_t n_per_group = 100;
  std::size_t f = 8;
  double noise = 0.1;
  std::size_t k = 2;
};

struct VerifySettings {
  std::string suite = "default";  // default | theorem | blindspot
  std::size_t binary = 200;
  std::size_t ternary = 20;
  std::size_t step_tightness = 50;
  std::size_t two_level_tightness = 20;
  double eta = 0.05;
  std::size_t corollary = 50;
  std::size_t quasiconvexity_trials = 10000;
  std::size_t strict_pairs = 1000;
  std::size_t minimizer_problems = 100;
  std::size_t concavity_triples = 1000;
  std::size_t blindspot_draws = 50;
  std::vector<std::size_t> blindspot_k{1, 2};
  std::size_t blindspot_f = 4;
};

struct CostSettings {
  std::optional<std::size_t> f;  // defaults to the graph's feature width
  std::size_t layers = 3;
};

struct RunConfig {
  std::optional<std::uint64_t> seed;
  std::filesystem::path out = ".";
  DataSource data;
  TrainConfig train;
  // Set when the document names a confidence spec; verify then adds it to the
  // quasiconvexity checks.
  bool has_confidence = false;
  VerifySettings verify;
  CostSettings cost;
  std::optional<std::filesystem::path> checkpoint;
  std::string infer_mode = "stochastic";  // stochastic | expected
};

// Parses the JSON run configuration. Unknown keys are rejected with
// ConfigError; malformed JSON raises ParseError.
RunConfig parse_run_config(const std::string& document);

// Full command line without the program name. Output and diagnostics go to the
// given streams; the return value is the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mowst
