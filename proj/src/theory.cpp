#include "mowst/theory.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>

#include "mowst/error.hpp"
#include "mowst/mixture.hpp"
#include "mowst/training.hpp"

namespace mowst {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double linf(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) d = std::max(d, std::abs(a[j] - b[j]));
  return d;
}

std::vector<double> uniform_point(std::size_t n) { return std::vector<double>(n, 1.0 / static_cast<double>(n)); }

double clamp_log(double x) { return std::log(std::clamp(x, kLogFloor, 1.0)); }

// Largest |dL/dp_j| at q.
double loss_lipschitz(std::span<const double> q, std::span<const double> alpha) {
  double l = 0.0;
  for (std::size_t j = 0; j < q.size(); ++j) l = std::max(l, alpha[j] / std::max(q[j], kLogFloor));
  return l;
}

// Largest |dD/dp_j| at q (a global bound for the variance).
double dispersion_lipschitz(std::span<const double> q, Dispersion kind) {
  if (kind == Dispersion::variance) return 2.0;
  const double n = static_cast<double>(q.size());
  double l = 0.0;
  for (double x : q) l = std::max(l, std::abs(1.0 + std::log(n * std::max(x, kLogFloor))));
  return l;
}

void require_fixed(const ConfidenceSpec& spec) {
  if (spec.is_learnable()) throw ContractError("theory checks need a fixed g shape");
  validate_spec(spec);
}

void require_interior(std::span<const double> alpha) {
  check_simplex(alpha);
  for (double a : alpha)
    if (!(a > 0.0 && a < 1.0)) throw DomainError("alpha must lie strictly inside the simplex");
}

}  // namespace

// ---------------------------------------------------------------- grid

std::size_t simplex_grid_size(std::size_t n, std::size_t resolution) {
  // C(m + n - 1, n - 1), built up multiplicatively to stay exact.
  std::size_t r = 1;
  for (std::size_t i = 1; i < n; ++i) r = r * (resolution + i) / i;
  return r;
}

SimplexGrid::SimplexGrid(std::size_t n, std::size_t resolution) : n_(n), m_(resolution) {
  if (n < 2) throw ConfigError("simplex grid needs n >= 2");
  if (resolution < 1) throw ConfigError("grid resolution must be positive");
  count_ = simplex_grid_size(n, resolution);
  coords_.reserve(count_ * n);
  std::vector<std::size_t> k(n, 0);
  const double m = static_cast<double>(resolution);
  // Odometer over k_1..k_{n-1}; the last part takes the remainder.
  auto emit = [&] {
    for (std::size_t j = 0; j < n; ++j) coords_.push_back(static_cast<double>(k[j]) / m);
  };
  std::size_t used = 0;
  while (true) {
    k[n - 1] = resolution - used;
    emit();
    // Advance the rightmost free coordinate that can still grow.
    std::size_t j = n - 1;
    while (j-- > 0) {
      if (used < resolution) {
        ++k[j];
        ++used;
        break;
      }
      used -= k[j];
      k[j] = 0;
    }
    if (j == static_cast<std::size_t>(-1)) break;
  }
}

std::size_t SimplexGrid::index_of(std::span<const std::size_t> k) const {
  if (k.size() != n_) throw ShapeError("grid index needs one count per coordinate");
  std::size_t total = 0;
  for (std::size_t x : k) total += x;
  if (total != m_) throw DomainError("grid counts do not sum to the resolution");
  // Points preceding k in lexicographic order: for each position j, all
  // choices of a smaller k_j with the rest free.
  std::size_t index = 0;
  std::size_t remaining = m_;
  for (std::size_t j = 0; j + 1 < n_; ++j) {
    for (std::size_t smaller = 0; smaller < k[j]; ++smaller) {
      index += simplex_grid_size(n_ - j - 1, remaining - smaller);
    }
    remaining -= k[j];
  }
  return index;
}

// ---------------------------------------------------------------- losses

double alpha_loss(std::span<const double> p, std::span<const double> alpha) {
  if (p.size() != alpha.size()) throw ShapeError("p and alpha differ in length");
  check_simplex(p);
  check_simplex(alpha);
  double l = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) l -= alpha[j] * clamp_log(p[j]);
  return l;
}

double delta(std::span<const double> alpha) { return alpha_loss(alpha, alpha); }

double group_objective(const GroupProblem& problem, std::span<const double> p) {
  const double c = confidence(p, problem.spec);
  // C = 0 contributes exactly zero, however large the boundary loss.
  if (c == 0.0) return 0.0;
  return c * (alpha_loss(p, problem.alpha) - problem.mu);
}

GridMinimum grid_argmin_serial(const SimplexGrid& grid,
                               const std::function<double(std::span<const double>)>& f) {
  double best = kInf;
  std::size_t best_i = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double v = f(grid.point(i));
    if (v < best) {
      best = v;
      best_i = i;
    }
  }
  const auto p = grid.point(best_i);
  return {best_i, std::vector<double>(p.begin(), p.end()), best};
}

GridMinimum grid_argmin(const SimplexGrid& grid, const std::function<double(std::span<const double>)>& f) {
  double best = kInf;
  std::size_t best_i = 0;
  const auto count = static_cast<std::int64_t>(grid.size());
#pragma omp parallel if (count >= 4096)
  {
    double local = kInf;
    std::size_t local_i = 0;
#pragma omp for schedule(static) nowait
    for (std::int64_t i = 0; i < count; ++i) {
      const double v = f(grid.point(static_cast<std::size_t>(i)));
      if (v < local) {
        local = v;
        local_i = static_cast<std::size_t>(i);
      }
    }
#pragma omp critical(mowst_grid_argmin)
    {
      if (local < best || (local == best && local_i < best_i)) {
        best = local;
        best_i = local_i;
      }
    }
  }
  const auto p = grid.point(best_i);
  return {best_i, std::vector<double>(p.begin(), p.end()), best};
}

GroupMinimum group_min(const GroupProblem& problem, const SimplexGrid& grid) {
  if (grid.dimension() != problem.alpha.size()) throw ShapeError("grid dimension differs from alpha");
  validate_spec(problem.spec);
  const GridMinimum m = grid_argmin(grid, [&](std::span<const double> p) { return group_objective(problem, p); });
  return {m.p, m.value, confidence(m.p, problem.spec)};
}

// ---------------------------------------------------------------- theorem

bool CaseReport::passed() const {
  return std::all_of(clauses.begin(), clauses.end(), [](const ClauseResult& c) { return c.pass; });
}

bool TightnessReport::passed() const {
  return std::all_of(clauses.begin(), clauses.end(), [](const ClauseResult& c) { return c.pass; });
}

namespace {

ClauseResult at_most(std::string name, double measured, double tolerance) {
  return {std::move(name), measured, tolerance, measured <= tolerance};
}

ClauseResult strictly_below(std::string name, double measured, double tolerance) {
  return {std::move(name), measured, tolerance, measured < tolerance};
}

}  // namespace

CaseReport verify_theorem_case(const GroupProblem& problem, const SimplexGrid& grid) {
  require_fixed(problem.spec);
  const auto& alpha = problem.alpha;
  require_interior(alpha);
  const std::size_t n = alpha.size();
  const auto uniform = uniform_point(n);
  if (linf(alpha, uniform) < 1e-3) throw ContractError("alpha must differ from the uniform distribution");

  const double m = static_cast<double>(grid.resolution());
  const double d = delta(alpha);
  const double mu = problem.mu;
  CaseReport report;
  report.theorem_case = std::abs(d - mu) <= 1e-12 ? 2 : (d > mu ? 1 : 3);
  report.minimum = group_min(problem, grid);
  const auto& p = report.minimum.p;

  switch (report.theorem_case) {
    case 1:
      report.clauses.push_back(at_most("minimizer_uniform", linf(p, uniform), grid.spacing()));
      report.clauses.push_back(at_most("confidence_zero", report.minimum.confidence, 0.0));
      report.clauses.push_back(at_most("objective_zero", std::abs(report.minimum.objective), 0.0));
      break;
    case 2:
      report.clauses.push_back(at_most("minimizer_alpha_or_uniform",
                                       std::min(linf(p, alpha), linf(p, uniform)), grid.spacing()));
      report.clauses.push_back(at_most("objective_zero", std::abs(report.minimum.objective),
                                       10.0 * loss_lipschitz(alpha, alpha) / m));
      break;
    default: {
      const Dispersion kind = problem.spec.dispersion;
      const double loss = alpha_loss(p, alpha);
      report.clauses.push_back(strictly_below("loss_below_mu", loss - mu, 0.0));

      const double c_alpha = confidence(alpha, problem.spec);
      const double d_alpha = dispersion(alpha, kind);
      const double tol_alpha = 10.0 * dispersion_lipschitz(alpha, kind) / m;
      report.clauses.push_back(at_most("confidence_lower", c_alpha - report.minimum.confidence,
                                       c_alpha - g_value(problem.spec, d_alpha - tol_alpha)));

      // Level set: grid points within one local loss step of mu.
      double d_level = -kInf;
      std::size_t arg = 0;
      for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto q = grid.point(i);
        const double band = 2.0 * loss_lipschitz(q, alpha) / m;
        if (std::abs(alpha_loss(q, alpha) - mu) > band) continue;
        const double dq = dispersion(q, kind);
        if (dq > d_level) {
          d_level = dq;
          arg = i;
        }
      }
      if (d_level == -kInf) {
        report.clauses.push_back({"confidence_upper", kInf, 0.0, false});
      } else {
        const double g_level = g_value(problem.spec, d_level);
        const double tol_d = 10.0 * dispersion_lipschitz(grid.point(arg), kind) / m;
        report.clauses.push_back(at_most("confidence_upper", report.minimum.confidence - g_level,
                                         g_value(problem.spec, d_level + tol_d) - g_level));
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------- tightness

namespace {

// Bisection for f(t) = target on [lo, hi], f monotone with f(lo) < target.
template <typename F>
double bisect(F&& f, double lo, double hi, double target, bool increasing) {
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if ((f(mid) < target) == increasing) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

double level_set_max_dispersion(std::span<const double> alpha, double level, Dispersion kind) {
  require_interior(alpha);
  const std::size_t n = alpha.size();
  if (!(level > delta(alpha))) throw ConfigError("level set is empty: level must exceed delta(alpha)");

  if (n == 2) {
    const double a1 = alpha[0];
    auto loss = [&](double p1) { return -alpha[0] * clamp_log(p1) - alpha[1] * clamp_log(1.0 - p1); };
    constexpr double kEdge = 1e-15;
    const double hi = loss(1.0 - kEdge) <= level ? 1.0 - kEdge : bisect(loss, a1, 1.0 - kEdge, level, true);
    const double lo = loss(kEdge) <= level ? kEdge : bisect(loss, kEdge, a1, level, false);
    const std::vector<double> ph{hi, 1.0 - hi};
    const std::vector<double> pl{lo, 1.0 - lo};
    return std::max(dispersion(ph, kind), dispersion(pl, kind));
  }
  if (n != 3) throw ConfigError("level-set search supports n = 2 and n = 3");

  // Rays from alpha in the plane sum = 0; each ray crosses the level set once.
  const double s2 = std::sqrt(2.0), s6 = std::sqrt(6.0);
  auto point_on_ray = [&](double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    const double dir[3] = {c / s2 + s / s6, -c / s2 + s / s6, -2.0 * s / s6};
    double t_max = kInf;
    for (int j = 0; j < 3; ++j)
      if (dir[j] < 0.0) t_max = std::min(t_max, -alpha[j] / dir[j]);
    auto at = [&](double t) {
      std::vector<double> q(3);
      for (int j = 0; j < 3; ++j) q[j] = std::max(0.0, alpha[j] + t * dir[j]);
      return q;
    };
    auto loss_t = [&](double t) {
      const auto q = at(t);
      double l = 0.0;
      for (int j = 0; j < 3; ++j) l -= alpha[j] * clamp_log(q[j]);
      return l;
    };
    const double t = loss_t(t_max) <= level ? t_max : bisect(loss_t, 0.0, t_max, level, true);
    auto q = at(t);
    const double total = q[0] + q[1] + q[2];
    for (double& x : q) x /= total;
    return dispersion(q, kind);
  };

  constexpr int kRays = 3600;
  double best = -kInf, best_theta = 0.0;
  for (int r = 0; r < kRays; ++r) {
    const double theta = 2.0 * std::numbers::pi * r / kRays;
    const double v = point_on_ray(theta);
    if (v > best) {
      best = v;
      best_theta = theta;
    }
  }
  // Golden-section refinement around the best ray.
  const double step = 2.0 * std::numbers::pi / kRays;
  double a = best_theta - step, b = best_theta + step;
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = point_on_ray(x1), f2 = point_on_ray(x2);
  for (int it = 0; it < 80; ++it) {
    if (f1 > f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - phi * (b - a);
      f1 = point_on_ray(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + phi * (b - a);
      f2 = point_on_ray(x2);
    }
  }
  return std::max({best, f1, f2});
}

TightnessReport verify_step_tightness(std::span<const double> alpha, double mu, const SimplexGrid& grid,
                                      Dispersion kind) {
  require_interior(alpha);
  if (!(mu > delta(alpha))) throw ConfigError("step tightness needs mu > delta(alpha)");
  GroupProblem problem{std::vector<double>(alpha.begin(), alpha.end()), mu, ConfidenceSpec{kind, StepG{0.0}}};
  TightnessReport r;
  r.spec = problem.spec;
  r.minimum = group_min(problem, grid);
  r.loss_at_minimum = alpha_loss(r.minimum.p, alpha);
  r.clauses.push_back(at_most("minimizer_is_alpha", linf(r.minimum.p, alpha), grid.spacing()));
  r.clauses.push_back(strictly_below("loss_below_mu", r.loss_at_minimum - mu, 0.0));
  return r;
}

TightnessReport verify_tightness(std::span<const double> alpha, double mu, double eta, const SimplexGrid& grid,
                                 std::optional<double> beta, Dispersion kind) {
  require_interior(alpha);
  const double d = delta(alpha);
  if (!(eta > 0.0) || !(d < mu - eta)) throw ConfigError("tightness needs eta > 0 and delta(alpha) < mu - eta");
  const double bound = eta / (mu - d);
  const double b = beta.value_or(0.5 * std::min(bound, 1.0));
  if (!(b > 0.0 && b < 1.0)) throw ConfigError("beta must lie in (0, 1)");

  TwoLevelG g{level_set_max_dispersion(alpha, mu - eta, kind), b};
  GroupProblem problem{std::vector<double>(alpha.begin(), alpha.end()), mu, ConfidenceSpec{kind, g}};
  TightnessReport r;
  r.spec = problem.spec;
  r.minimum = group_min(problem, grid);
  r.loss_at_minimum = alpha_loss(r.minimum.p, alpha);
  const double tol = 10.0 * loss_lipschitz(r.minimum.p, alpha) / static_cast<double>(grid.resolution());
  r.clauses.push_back(at_most("loss_at_least_mu_minus_eta", (mu - eta) - r.loss_at_minimum, tol));
  r.clauses.push_back(strictly_below("loss_below_mu", r.loss_at_minimum - mu, 0.0));
  return r;
}

BinaryBounds binary_bounds(double alpha1, double mu) {
  if (!(alpha1 >= 0.5 && alpha1 < 1.0)) throw DomainError("alpha1 must lie in [0.5, 1)");
  const double a2 = 1.0 - alpha1;
  auto loss = [&](double p) { return -alpha1 * clamp_log(p) - a2 * clamp_log(1.0 - p); };
  const double d = loss(alpha1);
  if (!(mu > d)) throw DomainError("corollary needs mu > delta(alpha)");
  constexpr double kEdge = 1e-15;
  if (loss(1.0 - kEdge) < mu) throw DomainError("mu exceeds the clamped loss range");
  double lo = alpha1, hi = 1.0 - kEdge;
  double mid = 0.5 * (lo + hi);
  for (int it = 0; it < 300; ++it) {
    mid = 0.5 * (lo + hi);
    const double v = loss(mid);
    if (std::abs(v - mu) < 1e-13 || mid <= lo || mid >= hi) break;
    if (v < mu) lo = mid;
    else hi = mid;
  }
  return {alpha1, mid, std::abs(loss(mid) - mu)};
}

// ---------------------------------------------------------------- blindspot

ExpertModel blindspot_detector(const BlindspotInstance& inst) {
  const Graph& g = inst.graph;
  const std::size_t f = g.feature_dim();
  if (g.num_classes() != 2) throw ContractError("detector construction assumes two classes");
  const auto xu = g.features().row(inst.u);
  const auto xv = g.features().row(inst.v);

  // Radius: half the smallest L1 distance from an anchor to any other node.
  double closest = kInf;
  for (std::size_t w = 0; w < g.num_nodes(); ++w) {
    for (const auto& [anchor, self] : {std::pair{xu, inst.u}, std::pair{xv, inst.v}}) {
      if (w == self) continue;
      double dist = 0.0;
      const auto xw = g.features().row(w);
      for (std::size_t j = 0; j < f; ++j) dist += std::abs(xw[j] - anchor[j]);
      closest = std::min(closest, dist);
    }
  }
  if (!(closest > 0.0)) throw ValidationError("another node shares an anchor's features");
  const double eps = 0.5 * closest;
  const double gain = 50.0 / eps;

  ExpertModel m = zero_expert(ExpertKind::weak, std::vector<std::size_t>{f, 4 * f, 2, 2});
  // Layer 1: relu(+(x_j - a_j)) and relu(-(x_j - a_j)) per anchor and coordinate.
  for (std::size_t a = 0; a < 2; ++a) {
    const auto anchor = a == 0 ? xu : xv;
    for (std::size_t j = 0; j < f; ++j) {
      for (std::size_t s = 0; s < 2; ++s) {
        const double sign = s == 0 ? 1.0 : -1.0;
        const std::size_t unit = a * 2 * f + 2 * j + s;
        m.layers[0].weight(j, unit) = sign;
        m.layers[0].bias(0, unit) = -sign * anchor[j];
      }
    }
  }
  // Layer 2: relu(eps - ||x - a||_1) per anchor.
  for (std::size_t a = 0; a < 2; ++a) {
    for (std::size_t k = 0; k < 2 * f; ++k) m.layers[1].weight(a * 2 * f + k, a) = -1.0;
    m.layers[1].bias(0, a) = eps;
  }
  // Layer 3: logit of class a grows with closeness to anchor a.
  m.layers[2].weight(0, 0) = gain;
  m.layers[2].weight(1, 1) = gain;
  return m;
}

BlindspotReport verify_blindspot(const BlindspotInstance& inst, std::size_t n_weight_draws, std::uint64_t seed) {
  validate_blindspot(inst);
  if (n_weight_draws < 20) throw ContractError("blindspot check needs at least 20 weight draws");
  const Graph& g = inst.graph;
  const std::size_t f = g.feature_dim();
  const std::size_t classes = g.num_classes();

  std::vector<std::size_t> dims{f};
  for (std::size_t i = 1; i < inst.k; ++i) dims.push_back(8);
  dims.push_back(classes);

  BlindspotReport report;
  report.draws = n_weight_draws;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  ExpertModel strong;
  for (std::size_t d = 0; d < n_weight_draws; ++d) {
    ExpertModel model = init_expert(ExpertKind::gcn, dims, rng());
    for (auto& layer : model.layers)
      for (double& b : layer.bias.values()) b = unit(rng);
    const Tensor h = gcn_logits(model, g, g.features());
    report.max_gap = std::max(report.max_gap, linf(h.row(inst.u), h.row(inst.v)));
    if (d == 0) strong = std::move(model);
  }

  const ExpertModel detector = blindspot_detector(inst);
  const ConfidenceSpec gate{Dispersion::variance, StepG{0.0}};
  const Tensor p = weak_forward(detector, g.features());
  const Tensor pp = gcn_forward(strong, g, g.features());
  const auto c = confidences(p, gate);
  const auto expected = infer_expected(p, pp, c);
  report.mowst_distinguishes = expected.predicted[inst.u] != expected.predicted[inst.v] &&
                               expected.predicted[inst.u] == g.labels()[inst.u] &&
                               expected.predicted[inst.v] == g.labels()[inst.v];
  report.matches_strong_elsewhere = true;
  for (std::size_t w = 0; w < g.num_nodes(); ++w) {
    if (w == inst.u || w == inst.v) continue;
    const auto q = expected.combined.row(w);
    const auto s = pp.row(w);
    if (c[w] != 0.0 || !std::equal(q.begin(), q.end(), s.begin()) || expected.predicted[w] != argmax(s)) {
      report.matches_strong_elsewhere = false;
    }
  }

  // A plain 2-layer weak expert trained on the two anchors only.
  Graph pair = Graph::build(g.num_nodes(), classes, g.features(), g.labels(), g.edge_list(),
                            Splits{{std::min(inst.u, inst.v), std::max(inst.u, inst.v)}, {}, {}});
  const ExpertModel init = init_expert(ExpertKind::weak, std::vector<std::size_t>{f, 8, classes}, rng());
  const ExpertModel separator = pretrain_expert(init, pair, 1000, 0.5).model;
  const Tensor sp = weak_forward(separator, g.features());
  report.separator_differs = argmax(sp.row(inst.u)) != argmax(sp.row(inst.v));
  return report;
}

// ---------------------------------------------------------------- suites

bool all_pass(std::span<const ReportRow> rows) {
  return std::all_of(rows.begin(), rows.end(), [](const ReportRow& r) { return r.pass; });
}

namespace {

void append(std::vector<ReportRow>& rows, const std::string& label, std::span<const double> alpha, double mu,
            const ConfidenceSpec& spec, std::span<const ClauseResult> clauses) {
  for (const auto& c : clauses) {
    rows.push_back({label, alpha.size(), std::vector<double>(alpha.begin(), alpha.end()), mu, describe(spec),
                    c.clause, c.measured, c.tolerance, c.pass});
  }
}

double uniform_in(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Binary alpha on the grid, alpha_1 in [lo, hi] and at least `gap` from 1/2.
std::vector<double> binary_grid_alpha(std::mt19937_64& rng, std::size_t m, double lo, double hi, double gap) {
  const auto kmin = static_cast<std::size_t>(std::ceil(lo * static_cast<double>(m)));
  const auto kmax = static_cast<std::size_t>(std::floor(hi * static_cast<double>(m)));
  std::uniform_int_distribution<std::size_t> pick(kmin, kmax);
  while (true) {
    const std::size_t k = pick(rng);
    const double a = static_cast<double>(k) / static_cast<double>(m);
    if (std::abs(a - 0.5) < gap) continue;
    return {a, static_cast<double>(m - k) / static_cast<double>(m)};
  }
}

// Ternary alpha on the grid, every entry >= 0.05, at least 0.05 from uniform.
std::vector<double> ternary_grid_alpha(std::mt19937_64& rng, std::size_t m) {
  const auto floor_k = static_cast<std::size_t>(std::ceil(0.05 * static_cast<double>(m)));
  const double md = static_cast<double>(m);
  while (true) {
    const std::size_t k1 = std::uniform_int_distribution<std::size_t>(floor_k, m - 2 * floor_k)(rng);
    const std::size_t k2 = std::uniform_int_distribution<std::size_t>(floor_k, m - k1 - floor_k)(rng);
    const std::size_t k3 = m - k1 - k2;
    std::vector<double> a{static_cast<double>(k1) / md, static_cast<double>(k2) / md, static_cast<double>(k3) / md};
    if (linf(a, uniform_point(3)) >= 0.05) return a;
  }
}

ConfidenceSpec random_spec(std::mt19937_64& rng, std::size_t shape, Dispersion kind, double d_alpha) {
  ConfidenceSpec spec;
  spec.dispersion = kind;
  switch (shape % 3) {
    case 0:
      spec.g = StepG{0.0};
      break;
    case 1: {
      // Keep d_max clear of D(alpha) so the shape's jump is not a coin toss.
      const bool below = std::bernoulli_distribution(0.5)(rng);
      const double factor = below ? uniform_in(rng, 0.3, 0.8) : uniform_in(rng, 1.25, 2.5);
      spec.g = TwoLevelG{d_alpha * factor, uniform_in(rng, 0.1, 0.9)};
      break;
    }
    default:
      spec.g = CappedLinearG{uniform_in(rng, 0.3, 3.0) / d_alpha};
  }
  return spec;
}

double case_mu(std::mt19937_64& rng, int theorem_case, double d) {
  if (theorem_case == 1) return d * uniform_in(rng, 0.1, 0.95);
  if (theorem_case == 2) return d;
  return d + uniform_in(rng, 0.02, 1.0);
}

}  // namespace

std::vector<ReportRow> theorem_suite(std::size_t binary_problems, std::size_t ternary_problems, std::uint64_t seed,
                                     std::size_t binary_resolution, std::size_t ternary_resolution) {
  std::mt19937_64 rng(seed);
  std::vector<ReportRow> rows;
  auto run = [&](std::size_t count, std::size_t n, std::size_t m) {
    if (count == 0) return;
    const SimplexGrid grid(n, m);
    for (std::size_t i = 0; i < count; ++i) {
      const int theorem_case = static_cast<int>(i % 3) + 1;
      const Dispersion kind = (i / 9) % 2 == 0 ? Dispersion::variance : Dispersion::neg_entropy;
      auto alpha = n == 2 ? binary_grid_alpha(rng, m, 0.05, 0.95, 0.05) : ternary_grid_alpha(rng, m);
      const double d = delta(alpha);
      GroupProblem problem{alpha, case_mu(rng, theorem_case, d),
                           random_spec(rng, i / 3, kind, dispersion(alpha, kind))};
      const CaseReport r = verify_theorem_case(problem, grid);
      append(rows, "case" + std::to_string(r.theorem_case), problem.alpha, problem.mu, problem.spec, r.clauses);
    }
  };
  run(binary_problems, 2, binary_resolution);
  run(ternary_problems, 3, ternary_resolution);
  return rows;
}

std::vector<ReportRow> step_tightness_suite(std::size_t problems, std::uint64_t seed, std::size_t resolution) {
  std::mt19937_64 rng(seed);
  const SimplexGrid grid(2, resolution);
  std::vector<ReportRow> rows;
  for (std::size_t i = 0; i < problems; ++i) {
    const Dispersion kind = i % 2 == 0 ? Dispersion::variance : Dispersion::neg_entropy;
    const auto alpha = binary_grid_alpha(rng, resolution, 0.05, 0.95, 0.05);
    const double mu = delta(alpha) + uniform_in(rng, 0.02, 1.0);
    const TightnessReport r = verify_step_tightness(alpha, mu, grid, kind);
    append(rows, "tight_step", alpha, mu, r.spec, r.clauses);
  }
  return rows;
}

std::vector<ReportRow> two_level_tightness_suite(std::size_t problems, double eta, std::uint64_t seed,
                                                 std::size_t resolution) {
  std::mt19937_64 rng(seed);
  const SimplexGrid grid(2, resolution);
  std::vector<ReportRow> rows;
  for (std::size_t i = 0; i < problems; ++i) {
    const Dispersion kind = i % 2 == 0 ? Dispersion::variance : Dispersion::neg_entropy;
    // Moderate alpha and mu keep the (mu - eta) level set well inside the grid.
    const auto alpha = binary_grid_alpha(rng, resolution, 0.2, 0.8, 0.05);
    const double mu = delta(alpha) + eta + uniform_in(rng, 0.05, 0.3);
    const TightnessReport r = verify_tightness(alpha, mu, eta, grid, std::nullopt, kind);
    append(rows, "tight_two_level", alpha, mu, r.spec, r.clauses);
  }
  return rows;
}

std::vector<ReportRow> corollary_suite(std::size_t problems, std::uint64_t seed, std::size_t resolution) {
  std::mt19937_64 rng(seed);
  const SimplexGrid grid(2, resolution);
  std::vector<ReportRow> rows;
  for (std::size_t i = 0; i < problems; ++i) {
    const Dispersion kind = i % 2 == 0 ? Dispersion::variance : Dispersion::neg_entropy;
    const auto alpha = binary_grid_alpha(rng, resolution, 0.55, 0.95, 0.0);
    const double mu = delta(alpha) + uniform_in(rng, 0.02, 0.8);
    GroupProblem problem{alpha, mu, random_spec(rng, i, kind, dispersion(alpha, kind))};
    const BinaryBounds bounds = binary_bounds(alpha[0], mu);
    const GroupMinimum min = group_min(problem, grid);
    const ClauseResult clauses[] = {
        at_most("bisection_residual", bounds.residual, 1e-9),
        at_most("above_alpha1", bounds.lower - min.p[0], 0.0),
        at_most("below_upper_plus_spacing", min.p[0] - bounds.upper, grid.spacing()),
    };
    append(rows, "corollary", alpha, mu, problem.spec, clauses);
  }
  return rows;
}

std::vector<ReportRow> quasiconvexity_suite(const ConfidenceSpec& spec, std::size_t trials, std::uint64_t seed) {
  std::vector<ReportRow> rows;
  for (std::size_t n : {2, 3}) {
    const double margin = quasiconvexity_witness_search(spec, n, trials, seed + n);
    const ClauseResult c = at_most("quasiconvexity_margin", margin, 1e-12);
    rows.push_back({"quasiconvexity", n, {}, 0.0, describe(spec), c.clause, c.measured, c.tolerance, c.pass});
  }
  return rows;
}

std::vector<ReportRow> strict_quasiconvexity_suite(std::size_t pairs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<ReportRow> rows;
  for (Dispersion kind : {Dispersion::variance, Dispersion::neg_entropy}) {
    for (std::size_t n : {2, 3}) {
      double worst = -kInf;
      std::size_t done = 0;
      std::vector<double> mix(n);
      while (done < pairs) {
        const auto p = random_simplex_point(n, rng);
        const auto q = random_simplex_point(n, rng);
        if (linf(p, q) < 0.01) continue;
        const double lambda = uniform_in(rng, 0.05, 0.95);
        for (std::size_t j = 0; j < n; ++j) mix[j] = lambda * p[j] + (1.0 - lambda) * q[j];
        worst = std::max(worst, dispersion(mix, kind) - std::max(dispersion(p, kind), dispersion(q, kind)));
        ++done;
      }
      ConfidenceSpec shown{kind, StepG{0.0}};
      rows.push_back({"strict_quasiconvexity", n, {}, 0.0, to_string(kind), "strict_margin", worst, 0.0,
                      worst < 0.0});
      (void)shown;
    }
  }
  return rows;
}

std::vector<ReportRow> loss_minimizer_suite(std::size_t problems, std::size_t concavity_triples,
                                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<ReportRow> rows;
  const SimplexGrid binary(2, 2000);
  const SimplexGrid ternary(3, 300);
  for (std::size_t i = 0; i < problems; ++i) {
    const SimplexGrid& grid = i % 2 == 0 ? binary : ternary;
    std::vector<double> alpha;
    do {
      alpha = random_simplex_point(grid.dimension(), rng);
    } while (*std::min_element(alpha.begin(), alpha.end()) < 0.02);
    const GridMinimum m = grid_argmin(grid, [&](std::span<const double> p) { return alpha_loss(p, alpha); });
    const ClauseResult c = at_most("argmin_is_alpha", linf(m.p, alpha), grid.spacing());
    rows.push_back({"loss_minimizer", alpha.size(), alpha, 0.0, "-", c.clause, c.measured, c.tolerance, c.pass});
  }
  double worst = -kInf;
  for (std::size_t t = 0; t < concavity_triples; ++t) {
    const std::size_t n = t % 2 == 0 ? 2 : 3;
    const auto a = random_simplex_point(n, rng);
    const auto b = random_simplex_point(n, rng);
    const double lambda = uniform_in(rng, 0.0, 1.0);
    std::vector<double> mix(n);
    for (std::size_t j = 0; j < n; ++j) mix[j] = lambda * a[j] + (1.0 - lambda) * b[j];
    worst = std::max(worst, lambda * delta(a) + (1.0 - lambda) * delta(b) - delta(mix));
  }
  const ClauseResult c = at_most("delta_concavity", worst, 1e-12);
  rows.push_back({"delta_concavity", 0, {}, 0.0, "-", c.clause, c.measured, c.tolerance, c.pass});
  return rows;
}

std::vector<ConfidenceSpec> reference_specs() {
  std::vector<ConfidenceSpec> specs;
  for (Dispersion kind : {Dispersion::variance, Dispersion::neg_entropy}) {
    specs.push_back({kind, StepG{0.0}});
    specs.push_back({kind, StepG{0.05}});
    specs.push_back({kind, TwoLevelG{0.05, 0.3}});
    specs.push_back({kind, CappedLinearG{3.0}});
  }
  return specs;
}

}  // namespace mowst
