#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mowst/error.hpp"
#include "mowst/experts.hpp"

using namespace mowst;

namespace {

Tensor random_features(std::size_t n, std::size_t f, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor x = Tensor::zeros(n, f);
  for (double& v : x.values()) v = u(rng);
  return x;
}

void check_rows_are_distributions(const Tensor& p) {
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double s = 0.0;
    for (double x : p.row(r)) {
      CHECK(x >= 0.0);
      s += x;
    }
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

}  // namespace

TEST_CASE("zero weak expert is uniform") {
  const ExpertModel m = zero_expert(ExpertKind::weak, std::vector<std::size_t>{3, 4, 2});
  const Tensor p = weak_forward(m, random_features(5, 3, 1));
  for (double x : p.values()) CHECK(x == 0.5);
}

TEST_CASE("one-layer identity expert") {
  ExpertModel m = zero_expert(ExpertKind::weak, std::vector<std::size_t>{2, 2});
  m.layers[0].weight = Tensor::matrix(2, 2, {1, 0, 0, 1});
  const Tensor p = weak_forward(m, Tensor::matrix(1, 2, {std::log(3.0), 0.0}));
  CHECK(p(0, 0) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(p(0, 1) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("weak rows depend only on their own features") {
  const ExpertModel m = init_expert(ExpertKind::weak, std::vector<std::size_t>{4, 8, 3}, 2);
  Tensor x = random_features(6, 4, 3);
  for (std::size_t j = 0; j < 4; ++j) x(5, j) = x(2, j);
  const Tensor p = weak_forward(m, x);
  CHECK(std::equal(p.row(2).begin(), p.row(2).end(), p.row(5).begin()));
  check_rows_are_distributions(p);
}

TEST_CASE("shape errors") {
  const ExpertModel m = init_expert(ExpertKind::weak, std::vector<std::size_t>{4, 3}, 2);
  CHECK_THROWS_AS(weak_forward(m, Tensor::zeros(2, 5)), ShapeError);
  ExpertModel broken = m;
  broken.layers.push_back(init_expert(ExpertKind::weak, std::vector<std::size_t>{5, 2}, 1).layers[0]);
  CHECK_THROWS_AS(validate_expert(broken), ShapeError);
  const Graph g = Graph::build(3, 2, Tensor::zeros(3, 4), {0, 1, 0}, {}, {});
  const ExpertModel gcn = init_expert(ExpertKind::gcn, std::vector<std::size_t>{4, 3}, 2);
  CHECK_THROWS_AS(gcn_forward(gcn, g, Tensor::zeros(2, 4)), ShapeError);
}

TEST_CASE("gcn on an edgeless graph equals the weak expert") {
  const ExpertModel gcn = init_expert(ExpertKind::gcn, std::vector<std::size_t>{3, 6, 2}, 4);
  ExpertModel weak = gcn;
  weak.kind = ExpertKind::weak;
  const Tensor x = random_features(7, 3, 5);
  const Graph g = Graph::build(7, 2, x, std::vector<std::size_t>(7, 0), {}, {});
  const Tensor a = gcn_forward(gcn, g, x);
  const Tensor b = weak_forward(weak, x);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.values()[i] == doctest::Approx(b.values()[i]).epsilon(1e-15));
}

TEST_CASE("single-edge convolution by hand") {
  // Both nodes have degree 1, so every coefficient is 1/2.
  const Tensor x = Tensor::matrix(2, 2, {1.0, 2.0, -3.0, 0.5});
  const Graph g = Graph::build(2, 2, x, {0, 1}, {{0, 1}}, {});
  ExpertModel m = zero_expert(ExpertKind::gcn, std::vector<std::size_t>{2, 2});
  m.layers[0].weight = Tensor::matrix(2, 2, {0.3, -0.2, 0.7, 0.1});
  m.layers[0].bias = Tensor::matrix(1, 2, {0.05, -0.05});
  const Tensor h = gcn_logits(m, g, x);
  const double agg[2] = {0.5 * (1.0 - 3.0), 0.5 * (2.0 + 0.5)};
  const double z0 = agg[0] * 0.3 + agg[1] * 0.7 + 0.05;
  const double z1 = agg[0] * -0.2 + agg[1] * 0.1 - 0.05;
  for (std::size_t v = 0; v < 2; ++v) {
    CHECK(h(v, 0) == doctest::Approx(z0).epsilon(1e-12));
    CHECK(h(v, 1) == doctest::Approx(z1).epsilon(1e-12));
  }
  const Tensor p = gcn_forward(m, g, x);
  CHECK(p(0, 0) == doctest::Approx(1.0 / (1.0 + std::exp(z1 - z0))).epsilon(1e-12));
}

TEST_CASE("skip layer adds the self transform") {
  const Tensor x = Tensor::matrix(2, 1, {1.0, 3.0});
  const Graph g = Graph::build(2, 2, x, {0, 1}, {{0, 1}}, {});
  ExpertModel m = zero_expert(ExpertKind::gcn_skip, std::vector<std::size_t>{1, 2});
  m.layers[0].weight = Tensor::matrix(1, 2, {1.0, 0.0});
  m.layers[0].self_weight = Tensor::matrix(1, 2, {0.0, 2.0});
  const Tensor h = gcn_logits(m, g, x);
  CHECK(h(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(h(0, 1) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(h(1, 1) == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("gcn locality") {
  const SpecializationGraph sg = generate_specialization_graph(30, 4, 0.2, 3);
  const Graph& g = sg.graph;
  const ExpertModel m = init_expert(ExpertKind::gcn, std::vector<std::size_t>{4, 5, 2}, 6);
  const Tensor base = gcn_forward(m, g, g.features());
  // Nodes more than two hops from node 0.
  std::vector<std::size_t> dist(g.num_nodes(), 99);
  dist[0] = 0;
  for (int round = 0; round < 2; ++round)
    for (std::size_t a = 0; a < g.num_nodes(); ++a)
      if (dist[a] <= static_cast<std::size_t>(round))
        for (std::size_t b : g.neighbors(a)) dist[b] = std::min(dist[b], dist[a] + 1);
  Tensor x = g.features();
  std::size_t changed = 0;
  for (std::size_t w = 0; w < g.num_nodes(); ++w)
    if (dist[w] > 2) {
      x(w, 0) += 5.0;
      ++changed;
    }
  REQUIRE(changed > 0);
  const Tensor moved = gcn_forward(m, g, x);
  CHECK(std::equal(base.row(0).begin(), base.row(0).end(), moved.row(0).begin()));
  check_rows_are_distributions(moved);
}

TEST_CASE("node permutation permutes outputs") {
  const SpecializationGraph sg = generate_specialization_graph(20, 3, 0.2, 8);
  const Graph& g = sg.graph;
  const std::size_t n = g.num_nodes();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(4));
  Tensor x = Tensor::zeros(n, 3);
  std::vector<std::size_t> labels(n);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t j = 0; j < 3; ++j) x(perm[v], j) = g.features()(v, j);
    labels[perm[v]] = g.labels()[v];
  }
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (auto [a, b] : g.edge_list()) edges.emplace_back(perm[a], perm[b]);
  const Graph h = Graph::build(n, 2, x, labels, edges, {});
  const ExpertModel m = init_expert(ExpertKind::gcn, std::vector<std::size_t>{3, 4, 2}, 1);
  const Tensor a = gcn_forward(m, g, g.features());
  const Tensor b = gcn_forward(m, h, h.features());
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t c = 0; c < 2; ++c) CHECK(b(perm[v], c) == doctest::Approx(a(v, c)).epsilon(1e-13));
}

TEST_CASE("blindspot rows agree under random convolutions") {
  for (std::size_t k : {1, 2}) {
    const BlindspotInstance inst = build_blindspot_graph(k, 4, 21);
    std::vector<std::size_t> dims{4};
    for (std::size_t i = 1; i < k; ++i) dims.push_back(6);
    dims.push_back(2);
    double gap = 0.0;
    for (std::uint64_t s = 0; s < 50; ++s) {
      const Tensor p = gcn_forward(init_expert(ExpertKind::gcn, dims, s), inst.graph, inst.graph.features());
      for (std::size_t c = 0; c < 2; ++c) gap = std::max(gap, std::abs(p(inst.u, c) - p(inst.v, c)));
    }
    CHECK(gap < 1e-9);
  }
}

TEST_CASE("initialization bounds and determinism") {
  const ExpertModel m = init_expert(ExpertKind::gcn_skip, std::vector<std::size_t>{9, 4, 2}, 3);
  CHECK(m == init_expert(ExpertKind::gcn_skip, std::vector<std::size_t>{9, 4, 2}, 3));
  for (double w : m.layers[0].weight.values()) CHECK(std::abs(w) <= 1.0 / 3.0);
  for (double w : m.layers[1].self_weight.values()) CHECK(std::abs(w) <= 0.5);
  for (double b : m.layers[1].bias.values()) CHECK(b == 0.0);
  CHECK(m.parameters().size() == 6);
}

TEST_CASE("checkpoints round-trip bit exactly") {
  for (ExpertKind kind : {ExpertKind::weak, ExpertKind::gcn, ExpertKind::gcn_skip}) {
    ExpertModel m = init_expert(kind, std::vector<std::size_t>{5, 7, 3}, 11);
    m.layers[0].bias.values()[2] = 1.0 / 3.0;
    CHECK(expert_from_json(checkpoint_to_json(m)) == m);
  }
}
