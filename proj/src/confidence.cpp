#include "mowst/confidence.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "mowst/error.hpp"

namespace mowst {

using json = nlohmann::json;

const char* to_string(Dispersion kind) {
  return kind == Dispersion::variance ? "variance" : "neg_entropy";
}

Dispersion dispersion_from_string(const std::string& name) {
  if (name == "variance") return Dispersion::variance;
  if (name == "neg_entropy") return Dispersion::neg_entropy;
  throw ConfigError("unknown dispersion '" + name + "'");
}

std::vector<Tensor*> LearnableG::parameters() { return {&w_var, &w_ent, &b1, &w2, &b2}; }

std::vector<const Tensor*> LearnableG::parameters() const { return {&w_var, &w_ent, &b1, &w2, &b2}; }

LearnableG init_learnable_g(std::size_t hidden, std::uint64_t seed) {
  if (hidden == 0) throw ConfigError("learnable g needs a positive hidden width");
  std::mt19937_64 rng(seed);
  auto draw = [&](std::size_t rows, std::size_t cols, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t = Tensor::zeros(rows, cols);
    for (double& x : t.values()) x = dist(rng);
    return t;
  };
  LearnableG g;
  g.hidden = hidden;
  const double first = 1.0 / std::sqrt(2.0);
  g.w_var = draw(1, hidden, first);
  g.w_ent = draw(1, hidden, first);
  g.b1 = Tensor::zeros(1, hidden);
  g.w2 = draw(hidden, 1, 1.0 / std::sqrt(static_cast<double>(hidden)));
  g.b2 = Tensor::zeros(1, 1);
  return g;
}

void validate_spec(const ConfidenceSpec& spec) {
  std::visit(
      [](const auto& g) {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, StepG>) {
          if (!(g.tau >= 0.0) || !std::isfinite(g.tau)) throw ConfigError("step threshold must be >= 0");
        } else if constexpr (std::is_same_v<T, TwoLevelG>) {
          if (!(g.d_max > 0.0) || !std::isfinite(g.d_max)) throw ConfigError("two_level d_max must be > 0");
          if (!(g.beta > 0.0 && g.beta < 1.0)) throw ConfigError("two_level beta must lie in (0, 1)");
        } else if constexpr (std::is_same_v<T, CappedLinearG>) {
          if (!(g.slope > 0.0) || !std::isfinite(g.slope)) throw ConfigError("capped_linear slope must be > 0");
        } else {
          if (g.hidden == 0) throw ConfigError("learnable g needs a positive hidden width");
          if (!g.initialized()) return;
          const std::size_t h = g.hidden;
          const bool ok = g.w_var.shape() == std::vector<std::size_t>{1, h} &&
                          g.w_ent.shape() == std::vector<std::size_t>{1, h} &&
                          g.b1.shape() == std::vector<std::size_t>{1, h} &&
                          g.w2.shape() == std::vector<std::size_t>{h, 1} &&
                          g.b2.shape() == std::vector<std::size_t>{1, 1};
          if (!ok) throw ConfigError("learnable g weights do not match hidden width " + std::to_string(h));
        }
      },
      spec.g);
}

std::string describe(const ConfidenceSpec& spec) {
  std::ostringstream out;
  out.precision(6);
  out << to_string(spec.dispersion) << '/';
  std::visit(
      [&](const auto& g) {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, StepG>) out << "step(" << g.tau << ')';
        else if constexpr (std::is_same_v<T, TwoLevelG>) out << "two_level(" << g.d_max << ',' << g.beta << ')';
        else if constexpr (std::is_same_v<T, CappedLinearG>) out << "capped_linear(" << g.slope << ')';
        else out << "learnable(" << g.hidden << ')';
      },
      spec.g);
  return out.str();
}

// ---------------------------------------------------------------- JSON

namespace {

json tensor_values(const Tensor& t) { return std::vector<double>(t.values().begin(), t.values().end()); }

Tensor read_tensor(const json& doc, const char* key, std::size_t rows, std::size_t cols) {
  if (!doc.contains(key)) throw ConfigError(std::string("learnable g is missing '") + key + "'");
  const auto v = doc[key].get<std::vector<double>>();
  if (v.size() != rows * cols) throw ConfigError(std::string("learnable g '") + key + "' has the wrong length");
  return Tensor::matrix(rows, cols, v);
}

}  // namespace

std::string spec_to_json(const ConfidenceSpec& spec) {
  json doc = {{"dispersion", to_string(spec.dispersion)}};
  std::visit(
      [&](const auto& g) {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, StepG>) {
          doc["g"] = "step";
          doc["tau"] = g.tau;
        } else if constexpr (std::is_same_v<T, TwoLevelG>) {
          doc["g"] = "two_level";
          doc["d_max"] = g.d_max;
          doc["beta"] = g.beta;
        } else if constexpr (std::is_same_v<T, CappedLinearG>) {
          doc["g"] = "capped_linear";
          doc["slope"] = g.slope;
        } else {
          doc["g"] = "learnable";
          doc["hidden"] = g.hidden;
          if (g.initialized()) {
            doc["w_var"] = tensor_values(g.w_var);
            doc["w_ent"] = tensor_values(g.w_ent);
            doc["b1"] = tensor_values(g.b1);
            doc["w2"] = tensor_values(g.w2);
            doc["b2"] = tensor_values(g.b2);
          }
        }
      },
      spec.g);
  return doc.dump();
}

ConfidenceSpec spec_from_json(const std::string& document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed confidence spec: ") + e.what(), e.byte);
  }
  if (!doc.is_object()) throw ConfigError("confidence spec must be an object");
  ConfidenceSpec spec;
  try {
    spec.dispersion = dispersion_from_string(doc.value("dispersion", std::string("variance")));
    const std::string g = doc.value("g", std::string("capped_linear"));
    if (g == "step") {
      spec.g = StepG{doc.value("tau", 0.0)};
    } else if (g == "two_level") {
      spec.g = TwoLevelG{doc.value("d_max", 0.1), doc.value("beta", 0.5)};
    } else if (g == "capped_linear") {
      spec.g = CappedLinearG{doc.value("slope", 4.0)};
    } else if (g == "learnable") {
      LearnableG lg;
      lg.hidden = doc.value("hidden", std::size_t{8});
      if (doc.contains("w_var")) {
        lg.w_var = read_tensor(doc, "w_var", 1, lg.hidden);
        lg.w_ent = read_tensor(doc, "w_ent", 1, lg.hidden);
        lg.b1 = read_tensor(doc, "b1", 1, lg.hidden);
        lg.w2 = read_tensor(doc, "w2", lg.hidden, 1);
        lg.b2 = read_tensor(doc, "b2", 1, 1);
      }
      spec.g = std::move(lg);
    } else {
      throw ConfigError("unknown g shape '" + g + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad confidence spec field: ") + e.what());
  }
  validate_spec(spec);
  return spec;
}

// ---------------------------------------------------------------- scalar path

void check_simplex(std::span<const double> p) {
  if (p.empty()) throw DomainError("empty probability vector");
  double total = 0.0;
  for (double x : p) {
    if (!std::isfinite(x) || x < -1e-9) throw DomainError("probability entry outside [0, 1]");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw DomainError("probability vector sums to " + std::to_string(total) + ", not 1");
  }
}

namespace {

double variance_of(std::span<const double> p) {
  const double u = 1.0 / static_cast<double>(p.size());
  double acc = 0.0;
  for (double x : p) acc += (x - u) * (x - u);
  return acc;
}

// sum p log(n p): exactly zero at the uniform point for the grid sizes in use,
// which the step shapes rely on (g(0) = 0 must not turn into g(1e-17) = 1).
double neg_entropy_of(std::span<const double> p) {
  const double n = static_cast<double>(p.size());
  double acc = 0.0;
  for (double x : p) acc += x * std::log(n * std::clamp(x, kLogFloor, 1.0));
  return std::max(0.0, acc);
}

double learnable_value(const LearnableG& g, double var, double ent) {
  if (!g.initialized()) throw ContractError("learnable g has not been initialized");
  double out = g.b2.values()[0];
  for (std::size_t j = 0; j < g.hidden; ++j) {
    const double z = var * g.w_var.values()[j] + ent * g.w_ent.values()[j] + g.b1.values()[j];
    out += std::max(0.0, z) * g.w2.values()[j];
  }
  return out >= 0.0 ? 1.0 / (1.0 + std::exp(-out)) : std::exp(out) / (1.0 + std::exp(out));
}

}  // namespace

double dispersion(std::span<const double> p, Dispersion kind) {
  check_simplex(p);
  return kind == Dispersion::variance ? variance_of(p) : neg_entropy_of(p);
}

double g_value(const ConfidenceSpec& spec, double x) {
  return std::visit(
      [x](const auto& g) -> double {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, StepG>) {
          return x > g.tau ? 1.0 : 0.0;
        } else if constexpr (std::is_same_v<T, TwoLevelG>) {
          if (x <= 0.0) return 0.0;
          // Dispersions that miss d_max only by rounding (0.7 - 0.5 is not 0.2
          // in binary) still reach the top level.
          return x >= g.d_max * (1.0 - 1e-12) ? 1.0 : g.beta;
        } else if constexpr (std::is_same_v<T, CappedLinearG>) {
          return std::min(1.0, g.slope * std::max(0.0, x));
        } else {
          throw ContractError("g_value is defined for fixed shapes only");
        }
      },
      spec.g);
}

double confidence(std::span<const double> p, const ConfidenceSpec& spec) {
  check_simplex(p);
  if (const auto* lg = std::get_if<LearnableG>(&spec.g)) {
    return learnable_value(*lg, variance_of(p), neg_entropy_of(p));
  }
  return g_value(spec, spec.dispersion == Dispersion::variance ? variance_of(p) : neg_entropy_of(p));
}

std::vector<double> confidences(const Tensor& probs, const ConfidenceSpec& spec) {
  std::vector<double> out(probs.rows());
  for (std::size_t v = 0; v < probs.rows(); ++v) out[v] = confidence(probs.row(v), spec);
  return out;
}

// ---------------------------------------------------------------- tape path

Var record_dispersion(Tape& tape, Var probs, Dispersion kind) {
  const Tensor& p = tape.value(probs);
  const std::size_t n = p.cols();
  if (kind == Dispersion::variance) {
    const Var centered =
        tape.sub(probs, tape.constant(Tensor::filled(p.rows(), n, 1.0 / static_cast<double>(n))));
    return tape.row_sum(tape.mul(centered, centered));
  }
  const Var plogp = tape.row_sum(tape.mul(probs, tape.log_prob(probs)));
  return tape.relu(tape.add_scalar(plogp, std::log(static_cast<double>(n))));
}

std::vector<Var> bind_g_parameters(Tape& tape, const ConfidenceSpec& spec, bool trainable) {
  std::vector<Var> vars;
  if (const auto* lg = std::get_if<LearnableG>(&spec.g)) {
    if (!lg->initialized()) throw ContractError("learnable g has not been initialized");
    for (const Tensor* t : lg->parameters()) {
      Tensor copy = *t;
      copy.set_requires_grad(trainable);
      vars.push_back(tape.leaf(std::move(copy)));
    }
  }
  return vars;
}

Var record_confidence(Tape& tape, Var probs, const ConfidenceSpec& spec,
                      std::span<const Var> g_params) {
  if (spec.is_learnable()) {
    if (g_params.size() != 5) throw ContractError("learnable g expects five bound parameters");
    const Var var = record_dispersion(tape, probs, Dispersion::variance);
    const Var ent = record_dispersion(tape, probs, Dispersion::neg_entropy);
    const Var hidden = tape.relu(tape.add_row(
        tape.add(tape.matmul(var, g_params[0]), tape.matmul(ent, g_params[1])), g_params[2]));
    return tape.sigmoid(tape.add_row(tape.matmul(hidden, g_params[3]), g_params[4]));
  }
  const Var d = record_dispersion(tape, probs, spec.dispersion);
  if (const auto* lin = std::get_if<CappedLinearG>(&spec.g)) {
    return tape.min_scalar(tape.scale(d, lin->slope), 1.0);
  }
  // Step shapes: piecewise constant, zero derivative.
  return tape.piecewise(d, [spec](double x) { return g_value(spec, x); });
}

// ---------------------------------------------------------------- search

std::vector<double> random_simplex_point(std::size_t n, std::mt19937_64& rng) {
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> p(n);
  double total = 0.0;
  for (double& x : p) {
    x = expo(rng);
    total += x;
  }
  for (double& x : p) x /= total;
  return p;
}

double quasiconvexity_witness_search(const ConfidenceSpec& spec, std::size_t n,
                                     std::size_t trials, std::uint64_t seed) {
  if (trials == 0) throw ContractError("quasiconvexity search needs at least one trial");
  if (n < 2) throw ContractError("simplex dimension must be at least 2");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = -std::numeric_limits<double>::infinity();
  std::vector<double> mix(n);
  for (std::size_t t = 0; t < trials; ++t) {
    const auto p = random_simplex_point(n, rng);
    const auto q = random_simplex_point(n, rng);
    const double lambda = unit(rng);
    for (std::size_t j = 0; j < n; ++j) mix[j] = lambda * p[j] + (1.0 - lambda) * q[j];
    const double margin = confidence(mix, spec) - std::max(confidence(p, spec), confidence(q, spec));
    worst = std::max(worst, margin);
  }
  return worst;
}

}  // namespace mowst
