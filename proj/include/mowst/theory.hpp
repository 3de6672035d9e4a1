#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mowst/confidence.hpp"
#include "mowst/experts.hpp"
#include "mowst/graph.hpp"

namespace mowst {

// Per-group problem min_p C(p) (L_alpha(p) - mu), alpha the group's label
// distribution and mu the frozen strong expert's mean loss on the group.
struct GroupProblem {
  std::vector<double> alpha;
  double mu = 0.0;
  ConfidenceSpec spec;
};

// All points (k_1/m, ..., k_n/m) with sum k = m, in lexicographic order of
// (k_1, ..., k_n). Index order therefore doubles as the tie-break order.
class SimplexGrid {
 public:
  SimplexGrid(std::size_t n, std::size_t resolution);

  std::size_t dimension() const noexcept { return n_; }
  std::size_t resolution() const noexcept { return m_; }
  std::size_t size() const noexcept { return count_; }
  double spacing() const noexcept { return 1.0 / static_cast<double>(m_); }
  std::span<const double> point(std::size_t i) const { return {coords_.data() + i * n_, n_}; }

  // Index of the grid point with coordinates k / m.
  std::size_t index_of(std::span<const std::size_t> k) const;

 private:
  std::size_t n_;
  std::size_t m_;
  std::size_t count_ = 0;
  std::vector<double> coords_;
};

// Binomial(m + n - 1, n - 1)
std::size_t simplex_grid_size(std::size_t n, std::size_t resolution);

// -sum alpha_j log p_j, p clamped at the shared floor.
double alpha_loss(std::span<const double> p, std::span<const double> alpha);
// Entropy of alpha, i.e. alpha_loss(alpha, alpha).
double delta(std::span<const double> alpha);

double group_objective(const GroupProblem& problem, std::span<const double> p);

struct GridMinimum {
  std::size_t index = 0;
  std::vector<double> p;
  double value = 0.0;
};

// Exhaustive argmin of f over the grid; ties go to the lowest index. The
// parallel reduction compares (value, index) pairs, so both versions return
// the same point.
GridMinimum grid_argmin(const SimplexGrid& grid, const std::function<double(std::span<const double>)>& f);
GridMinimum grid_argmin_serial(const SimplexGrid& grid,
                               const std::function<double(std::span<const double>)>& f);

struct GroupMinimum {
  std::vector<double> p;
  double objective = 0.0;
  double confidence = 0.0;
};

GroupMinimum group_min(const GroupProblem& problem, const SimplexGrid& grid);

struct ClauseResult {
  std::string clause;
  double measured = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct CaseReport {
  int theorem_case = 0;  // 1: delta > mu, 2: delta == mu, 3: delta < mu
  GroupMinimum minimum;
  std::vector<ClauseResult> clauses;
  bool passed() const;
};

// Checks the clauses of the three-case minimizer theorem for a fixed-g spec.
// alpha must not be uniform.
CaseReport verify_theorem_case(const GroupProblem& problem, const SimplexGrid& grid);

// Largest dispersion over the level set {p : L_alpha(p) = level}. Exact
// (bisection on both branches) for n = 2; ray search with refinement for
// n = 3.
double level_set_max_dispersion(std::span<const double> alpha, double level, Dispersion kind);

struct TightnessReport {
  ConfidenceSpec spec;
  GroupMinimum minimum;
  double loss_at_minimum = 0.0;
  std::vector<ClauseResult> clauses;
  bool passed() const;
};

// Step threshold 0: every non-uniform point has confidence 1, so the minimizer
// is alpha itself.
TightnessReport verify_step_tightness(std::span<const double> alpha, double mu, const SimplexGrid& grid,
                                      Dispersion kind = Dispersion::variance);

// Two-level g with d_max = max D over the (mu - eta) level set and
// 0 < beta < eta / (mu - delta): the minimizer's loss lies in [mu - eta, mu).
// beta defaults to half its bound. ConfigError unless delta < mu - eta.
TightnessReport verify_tightness(std::span<const double> alpha, double mu, double eta, const SimplexGrid& grid,
                                 std::optional<double> beta = std::nullopt,
                                 Dispersion kind = Dispersion::variance);

struct BinaryBounds {
  double lower = 0.0;
  double upper = 0.0;
  double residual = 0.0;  // |L+(upper) - mu|
};

// [alpha1, L+^{-1}(mu)) with L+(p) = -alpha1 log p - (1 - alpha1) log(1 - p)
// on [alpha1, 1). Requires alpha1 in [0.5, 1) and mu > delta.
BinaryBounds binary_bounds(double alpha1, double mu);

// Weak expert that outputs a confident class-0 row at x_u, class-1 at x_v and
// the exactly uniform row everywhere else (ReLU distance detectors).
ExpertModel blindspot_detector(const BlindspotInstance& instance);

struct BlindspotReport {
  std::size_t draws = 0;
  double max_gap = 0.0;  // max over draws of ||h_u - h_v||_inf (last-layer logits)
  bool mowst_distinguishes = false;
  bool matches_strong_elsewhere = false;
  bool separator_differs = false;  // trained 2-layer weak expert
};

BlindspotReport verify_blindspot(const BlindspotInstance& instance, std::size_t n_weight_draws,
                                 std::uint64_t seed);

// ------------------------------------------------------------ suites

struct ReportRow {
  std::string case_label;
  std::size_t n = 0;
  std::vector<double> alpha;
  double mu = 0.0;
  std::string spec;
  std::string clause;
  double measured = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

bool all_pass(std::span<const ReportRow> rows);

// Random problems spanning the three cases and the step / two_level /
// capped_linear shapes, alpha on the grid.
std::vector<ReportRow> theorem_suite(std::size_t binary_problems, std::size_t ternary_problems,
                                     std::uint64_t seed, std::size_t binary_resolution = 2000,
                                     std::size_t ternary_resolution = 300);
std::vector<ReportRow> step_tightness_suite(std::size_t problems, std::uint64_t seed,
                                            std::size_t resolution = 2000);
std::vector<ReportRow> two_level_tightness_suite(std::size_t problems, double eta, std::uint64_t seed,
                                                 std::size_t resolution = 5000);
std::vector<ReportRow> corollary_suite(std::size_t problems, std::uint64_t seed, std::size_t resolution = 2000);
// Quasiconvexity margin of one spec over random triples in dimensions 2 and 3.
std::vector<ReportRow> quasiconvexity_suite(const ConfidenceSpec& spec, std::size_t trials, std::uint64_t seed);
// Strict quasiconvexity of both dispersions on distinct pairs.
std::vector<ReportRow> strict_quasiconvexity_suite(std::size_t pairs, std::uint64_t seed);
// Grid argmin of L_alpha versus alpha, and concavity of delta.
std::vector<ReportRow> loss_minimizer_suite(std::size_t problems, std::size_t concavity_triples,
                                            std::uint64_t seed);

// The fixed specs used by the default quasiconvexity check.
std::vector<ConfidenceSpec> reference_specs();

}  // namespace mowst
