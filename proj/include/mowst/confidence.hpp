#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mowst/tensor.hpp"

namespace mowst {

enum class Dispersion { variance, neg_entropy };

const char* to_string(Dispersion kind);
Dispersion dispersion_from_string(const std::string& name);

// g(x) = 0 for x <= tau, 1 above.
struct StepG {
  double tau = 0.0;
};

// g(x) = 0 for x <= 0, beta for 0 < x < d_max, 1 for x >= d_max.
struct TwoLevelG {
  double d_max = 0.1;
  double beta = 0.5;
};

// g(x) = min(1, slope * x)
struct CappedLinearG {
  double slope = 4.0;
};

// sigmoid(w2 . relu(var * w_var + negent * w_ent + b1) + b2). Reads both
// dispersions of the prediction regardless of the spec's dispersion field.
// Neither monotonicity nor g(0) = 0 is enforced.
struct LearnableG {
  std::size_t hidden = 8;
  // Weights stay empty until initialized (see init_learnable_g).
  Tensor w_var;  // 1 x h
  Tensor w_ent;  // 1 x h
  Tensor b1;     // 1 x h
  Tensor w2;     // h x 1
  Tensor b2;     // 1 x 1

  bool initialized() const { return w_var.size() > 0; }
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
};

LearnableG init_learnable_g(std::size_t hidden, std::uint64_t seed);

struct ConfidenceSpec {
  Dispersion dispersion = Dispersion::variance;
  std::variant<StepG, TwoLevelG, CappedLinearG, LearnableG> g = CappedLinearG{};

  bool is_learnable() const { return std::holds_alternative<LearnableG>(g); }
};

// Throws ConfigError on out-of-range parameters (negative tau, beta outside
// (0, 1), nonpositive slope or d_max, malformed learnable weights).
void validate_spec(const ConfidenceSpec& spec);

// Config / checkpoint form, e.g.
//   {"dispersion": "variance", "g": "two_level", "d_max": 0.08, "beta": 0.1}
// A learnable g carries "hidden" and, once trained, its weight arrays.
std::string spec_to_json(const ConfidenceSpec& spec);
ConfidenceSpec spec_from_json(const std::string& document);

// Short human-readable form, e.g. "variance/two_level(0.08,0.1)".
std::string describe(const ConfidenceSpec& spec);

// Row must lie on the simplex within 1e-9; otherwise DomainError.
void check_simplex(std::span<const double> p);

double dispersion(std::span<const double> p, Dispersion kind);

// G alone, for the fixed shapes. ContractError on a learnable spec.
double g_value(const ConfidenceSpec& spec, double x);

double confidence(std::span<const double> p, const ConfidenceSpec& spec);
// One confidence per row of a probability matrix.
std::vector<double> confidences(const Tensor& probs, const ConfidenceSpec& spec);

// Dispersion of each row as an n x 1 column on the tape.
Var record_dispersion(Tape& tape, Var probs, Dispersion kind);

// Confidence column (n x 1). `g_params` holds the learnable weights bound on
// the tape (LearnableG::parameters() order) and is ignored for fixed specs.
Var record_confidence(Tape& tape, Var probs, const ConfidenceSpec& spec,
                      std::span<const Var> g_params);

std::vector<Var> bind_g_parameters(Tape& tape, const ConfidenceSpec& spec, bool trainable);

// Largest C(lambda p + (1 - lambda) p') - max(C(p), C(p')) over random
// simplex pairs of dimension n.
double quasiconvexity_witness_search(const ConfidenceSpec& spec, std::size_t n,
                                     std::size_t trials, std::uint64_t seed);

// Uniformly distributed point on the (n-1)-simplex.
std::vector<double> random_simplex_point(std::size_t n, std::mt19937_64& rng);

}  // namespace mowst
