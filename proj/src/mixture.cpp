#include "mowst/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mowst/confidence.hpp"
#include "mowst/error.hpp"

namespace mowst {

namespace {

void check_inputs(const Tensor& weak, const Tensor& strong, std::span<const double> c,
                  std::span<const std::size_t> labels) {
  if (weak.shape() != strong.shape()) {
    throw ShapeError("expert outputs " + weak.shape_string() + " and " + strong.shape_string() +
                     " differ in shape");
  }
  const std::size_t n = weak.rows();
  if (c.size() != n || labels.size() != n) {
    throw ShapeError("confidence / label counts do not match " + std::to_string(n) + " nodes");
  }
  if (n == 0) throw ContractError("mixture loss over zero nodes");
  for (std::size_t v = 0; v < n; ++v) {
    check_simplex(weak.row(v));
    check_simplex(strong.row(v));
    if (!(c[v] >= 0.0 && c[v] <= 1.0)) {
      throw DomainError("confidence of node " + std::to_string(v) + " outside [0, 1]");
    }
    if (labels[v] >= weak.cols()) throw DomainError("label of node " + std::to_string(v) + " out of range");
  }
}

}  // namespace

MixtureOutput combine(Tensor weak, Tensor strong, std::vector<double> confidence) {
  if (weak.shape() != strong.shape() || confidence.size() != weak.rows()) {
    throw ShapeError("cannot combine " + weak.shape_string() + " with " + strong.shape_string());
  }
  Tensor q = Tensor::zeros(weak.rows(), weak.cols());
  for (std::size_t v = 0; v < weak.rows(); ++v) {
    const double c = confidence[v];
    for (std::size_t j = 0; j < weak.cols(); ++j) q(v, j) = c * weak(v, j) + (1.0 - c) * strong(v, j);
  }
  return MixtureOutput{std::move(weak), std::move(strong), std::move(confidence), std::move(q)};
}

double cross_entropy(std::span<const double> p, std::size_t label) {
  return -std::log(std::clamp(p[label], kLogFloor, 1.0));
}

std::size_t argmax(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

double mowst_loss(const Tensor& weak, const Tensor& strong, std::span<const double> c,
                  std::span<const std::size_t> labels) {
  check_inputs(weak, strong, c, labels);
  double total = 0.0;
  for (std::size_t v = 0; v < weak.rows(); ++v) {
    total += c[v] * cross_entropy(weak.row(v), labels[v]) +
             (1.0 - c[v]) * cross_entropy(strong.row(v), labels[v]);
  }
  return total / static_cast<double>(weak.rows());
}

double mowst_star_loss(const Tensor& weak, const Tensor& strong, std::span<const double> c,
                       std::span<const std::size_t> labels) {
  check_inputs(weak, strong, c, labels);
  double total = 0.0;
  for (std::size_t v = 0; v < weak.rows(); ++v) {
    const std::size_t y = labels[v];
    const double q = c[v] * weak(v, y) + (1.0 - c[v]) * strong(v, y);
    total += -std::log(std::clamp(q, kLogFloor, 1.0));
  }
  return total / static_cast<double>(weak.rows());
}

std::vector<std::vector<double>> multi_expert_weights(
    std::span<const std::vector<double>> confidences, std::size_t num_experts, std::size_t num_nodes) {
  if (num_experts < 2) throw ConfigError("need at least two experts");
  if (confidences.size() != num_experts - 1) {
    throw ConfigError("expected " + std::to_string(num_experts - 1) + " confidence rows, got " +
                      std::to_string(confidences.size()));
  }
  std::vector<std::vector<double>> w(num_nodes, std::vector<double>(num_experts));
  for (std::size_t v = 0; v < num_nodes; ++v) {
    double remaining = 1.0;
    for (std::size_t m = 0; m + 1 < num_experts; ++m) {
      if (confidences[m].size() != num_nodes) throw ConfigError("confidence row has the wrong length");
      w[v][m] = remaining * confidences[m][v];
      remaining *= 1.0 - confidences[m][v];
    }
    w[v][num_experts - 1] = remaining;
  }
  return w;
}

double multi_expert_loss(std::span<const Tensor> probs, std::span<const std::vector<double>> confidences,
                         std::span<const std::size_t> labels) {
  const std::size_t m = probs.size();
  if (m < 2) throw ConfigError("need at least two experts");
  if (confidences.size() != m - 1) {
    throw ConfigError("expected " + std::to_string(m - 1) + " confidence rows, got " +
                      std::to_string(confidences.size()));
  }
  for (std::size_t q = 0; q + 1 < m; ++q) check_inputs(probs[q], probs[m - 1], confidences[q], labels);

  const std::size_t nodes = labels.size();
  double total = 0.0;
  for (std::size_t v = 0; v < nodes; ++v) {
    // Innermost term first: L_{>=M} = L_M, then fold towards the first expert.
    double tail = cross_entropy(probs[m - 1].row(v), labels[v]);
    for (std::size_t q = m - 1; q-- > 0;) {
      const double c = confidences[q][v];
      tail = c * cross_entropy(probs[q].row(v), labels[v]) + (1.0 - c) * tail;
    }
    total += tail;
  }
  return total / static_cast<double>(nodes);
}

StochasticPrediction infer_stochastic(const Tensor& weak, const Tensor& strong,
                                      std::span<const double> c, std::uint64_t seed) {
  if (weak.shape() != strong.shape() || c.size() != weak.rows()) {
    throw ShapeError("inconsistent inputs to stochastic inference");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  StochasticPrediction out;
  out.predicted.resize(weak.rows());
  out.weak_fired.resize(weak.rows());
  for (std::size_t v = 0; v < weak.rows(); ++v) {
    const bool fire = unit(rng) < c[v];
    out.weak_fired[v] = fire;
    out.predicted[v] = argmax(fire ? weak.row(v) : strong.row(v));
  }
  return out;
}

ExpectedPrediction infer_expected(const Tensor& weak, const Tensor& strong, std::span<const double> c) {
  MixtureOutput mix = combine(weak, strong, std::vector<double>(c.begin(), c.end()));
  ExpectedPrediction out{std::move(mix.combined), {}};
  out.predicted.resize(out.combined.rows());
  for (std::size_t v = 0; v < out.combined.rows(); ++v) out.predicted[v] = argmax(out.combined.row(v));
  return out;
}

// ---------------------------------------------------------------- tape forms

Tensor target_matrix(std::span<const std::size_t> labels, std::size_t num_classes,
                     std::span<const std::size_t> nodes) {
  if (nodes.empty()) throw ContractError("target set is empty");
  Tensor t = Tensor::zeros(labels.size(), num_classes);
  const double w = 1.0 / static_cast<double>(nodes.size());
  for (std::size_t v : nodes) {
    if (v >= labels.size() || labels[v] >= num_classes) throw DomainError("target node or label out of range");
    t(v, labels[v]) = w;
  }
  return t;
}

Var record_cross_entropy(Tape& tape, Var probs, const Tensor& targets) {
  return tape.scale(tape.sum(tape.mul(tape.constant(targets), tape.log_prob(probs))), -1.0);
}

Var record_mowst_loss(Tape& tape, Var weak, Var strong, Var c, const Tensor& targets) {
  const Var y = tape.constant(targets);
  const Var weak_ll = tape.row_sum(tape.mul(y, tape.log_prob(weak)));
  const Var strong_ll = tape.row_sum(tape.mul(y, tape.log_prob(strong)));
  const Var rest = tape.add_scalar(tape.scale(c, -1.0), 1.0);
  const Var per_node = tape.add(tape.mul(c, weak_ll), tape.mul(rest, strong_ll));
  return tape.scale(tape.sum(per_node), -1.0);
}

Var record_mowst_star_loss(Tape& tape, Var weak, Var strong, Var c, const Tensor& targets) {
  const std::size_t n = tape.value(weak).cols();
  // Broadcast the confidence column across classes with a ones row.
  const Var ones = tape.constant(Tensor::filled(1, n, 1.0));
  const Var cw = tape.matmul(c, ones);
  const Var rest = tape.add_scalar(tape.scale(cw, -1.0), 1.0);
  const Var q = tape.add(tape.mul(cw, weak), tape.mul(rest, strong));
  return record_cross_entropy(tape, q, targets);
}

}  // namespace mowst
