#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mowst/tensor.hpp"

namespace mowst {

// Per-node outputs of the two experts and the gate.
struct MixtureOutput {
  Tensor weak;                     // p, num_nodes x n
  Tensor strong;                   // p', num_nodes x n
  std::vector<double> confidence;  // c
  Tensor combined;                 // c p + (1 - c) p'
};

MixtureOutput combine(Tensor weak, Tensor strong, std::vector<double> confidence);

// -log p_y with the shared clamp floor.
double cross_entropy(std::span<const double> p, std::size_t label);

// Lowest index among the maxima.
std::size_t argmax(std::span<const double> row);

// mean_v [c_v CE(p_v) + (1 - c_v) CE(p'_v)]
double mowst_loss(const Tensor& weak, const Tensor& strong, std::span<const double> c,
                  std::span<const std::size_t> labels);

// mean_v CE(c_v p_v + (1 - c_v) p'_v)
double mowst_star_loss(const Tensor& weak, const Tensor& strong, std::span<const double> c,
                       std::span<const std::size_t> labels);

// Per-node mixing weights prod_{i<m}(1 - C_i) C_m with C_M = 1. Row v of the
// result holds the M weights for node v.
std::vector<std::vector<double>> multi_expert_weights(
    std::span<const std::vector<double>> confidences, std::size_t num_experts, std::size_t num_nodes);

// Recursive M-expert loss L_{>=q} = C_q L_q + (1 - C_q) L_{>=q+1}, L_{>=M} = L_M.
// Needs exactly M - 1 confidence vectors.
double multi_expert_loss(std::span<const Tensor> probs, std::span<const std::vector<double>> confidences,
                         std::span<const std::size_t> labels);

struct StochasticPrediction {
  std::vector<std::size_t> predicted;
  std::vector<bool> weak_fired;
};

// One uniform draw per node in node-id order; the weak prediction is accepted
// when the draw is below c_v.
StochasticPrediction infer_stochastic(const Tensor& weak, const Tensor& strong,
                                      std::span<const double> c, std::uint64_t seed);

struct ExpectedPrediction {
  Tensor combined;
  std::vector<std::size_t> predicted;
};

ExpectedPrediction infer_expected(const Tensor& weak, const Tensor& strong, std::span<const double> c);

// Tape forms. `targets` is num_nodes x n with targets[v][y_v] = weight of node
// v (e.g. 1/|train| on training nodes, 0 elsewhere) and zeros otherwise, so
// the result is the weighted mean over the selected nodes. `c` is a column.
Tensor target_matrix(std::span<const std::size_t> labels, std::size_t num_classes,
                     std::span<const std::size_t> nodes);
Var record_cross_entropy(Tape& tape, Var probs, const Tensor& targets);
Var record_mowst_loss(Tape& tape, Var weak, Var strong, Var c, const Tensor& targets);
Var record_mowst_star_loss(Tape& tape, Var weak, Var strong, Var c, const Tensor& targets);

}  // namespace mowst
