#pragma once

// Fixtures shared by the unit tests and the acceptance binary.

#include <random>
#include <vector>

#include "mowst/confidence.hpp"
#include "mowst/experts.hpp"
#include "mowst/graph.hpp"
#include "mowst/mixture.hpp"

namespace mowst::scenarios {

// Six nodes, three classes, a path 0-1-2-3 plus a triangle 3-4-5, random
// features. Nodes 0..3 train, 4 val, 5 test.
inline Graph six_node_graph(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor x = Tensor::zeros(6, 4);
  for (double& v : x.values()) v = u(rng);
  return Graph::build(6, 3, x, {0, 1, 2, 0, 1, 2}, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {3, 5}},
                      Splits{{0, 1, 2, 3}, {4}, {5}});
}

// Largest relative gradient error of the full mixture objective with respect
// to every weight of both experts (and the learnable g, when given).
inline double mixture_gradient_error(const Graph& graph, const ExpertModel& weak, const ExpertModel& strong,
                                     const ConfidenceSpec& spec, bool star, double h) {
  std::vector<Tensor> inputs;
  for (const Tensor* t : weak.parameters()) inputs.push_back(*t);
  const std::size_t nw = inputs.size();
  for (const Tensor* t : strong.parameters()) inputs.push_back(*t);
  const std::size_t ns = inputs.size() - nw;
  const Tensor targets = target_matrix(graph.labels(), graph.num_classes(), graph.splits().train);
  const auto adj = graph.normalized_adjacency();
  auto expr = [&](Tape& tape, std::span<const Var> in) {
    const Var x = tape.constant(graph.features());
    const Var p = record_forward(tape, weak, in.subspan(0, nw), x, adj);
    const Var q = record_forward(tape, strong, in.subspan(nw, ns), x, adj);
    const auto gp = bind_g_parameters(tape, spec, false);
    const Var c = record_confidence(tape, p, spec, gp);
    return star ? record_mowst_star_loss(tape, p, q, c, targets) : record_mowst_loss(tape, p, q, c, targets);
  };
  return check_gradient(expr, inputs, h);
}

}  // namespace mowst::scenarios
