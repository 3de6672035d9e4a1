#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "mowst/error.hpp"
#include "mowst/graph.hpp"

using namespace mowst;

namespace {

const char* kTwoNodes = R"({"num_nodes": 2, "num_classes": 2, "features": [[1.0, 0.0], [0.0, 1.0]],
  "labels": [0, 1], "edges": [[0, 1]], "splits": {"train": [0], "val": [1], "test": []}})";

std::string replace(std::string s, const std::string& from, const std::string& to) {
  s.replace(s.find(from), from.size(), to);
  return s;
}

// All-pairs hop distances by repeated relaxation; independent of the BFS in
// the library.
std::vector<std::vector<std::size_t>> hop_distances(const Graph& g) {
  const std::size_t n = g.num_nodes();
  const std::size_t inf = n + 1;
  std::vector<std::vector<std::size_t>> d(n, std::vector<std::size_t>(n, inf));
  for (std::size_t i = 0; i < n; ++i) d[i][i] = 0;
  for (auto [a, b] : g.edge_list()) d[a][b] = d[b][a] = 1;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
  return d;
}

Graph path3() {
  return Graph::build(3, 2, Tensor::zeros(3, 2), {0, 1, 0}, {{0, 1}, {1, 2}}, {});
}

}  // namespace

TEST_CASE("smallest graph loads with unit degrees") {
  const Graph g = parse_graph(kTwoNodes);
  CHECK(g.num_nodes() == 2);
  CHECK(g.degrees() == std::vector<std::size_t>{1, 1});
}

TEST_CASE("duplicate and reversed edges collapse") {
  const Graph g = parse_graph(replace(kTwoNodes, "[[0, 1]]", "[[0, 1], [1, 0], [0, 1]]"));
  CHECK(g.num_edges() == 1);
  CHECK(g.edge_list() == std::vector<std::pair<std::size_t, std::size_t>>{{0, 1}});
}

TEST_CASE("validation errors name the record") {
  auto message = [](const std::string& doc) -> std::string {
    try {
      parse_graph(doc);
    } catch (const ValidationError& e) {
      return e.what();
    }
    return "";
  };
  CHECK(message(replace(kTwoNodes, "\"labels\": [0, 1]", "\"labels\": [0, 2]")).find("labels[1]") !=
        std::string::npos);
  CHECK(message(replace(kTwoNodes, "[0.0, 1.0]]", "[0.0]]")).find("features[1]") != std::string::npos);
  CHECK(message(replace(kTwoNodes, "[[0, 1]]", "[[0, 1], [1, 5]]")).find("edges[1]") != std::string::npos);
  CHECK(message(replace(kTwoNodes, "\"num_nodes\"", "\"extra\": 1, \"num_nodes\"")).find("extra") !=
        std::string::npos);
  CHECK(message(replace(kTwoNodes, "\"test\": []", "\"test\": [0]")).find("splits") != std::string::npos);
}

TEST_CASE("malformed JSON reports a byte offset") {
  const std::string doc = "{\"num_nodes\": 2,, }";
  try {
    parse_graph(doc);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.byte_offset() > 0);
    CHECK(e.byte_offset() <= doc.size());
  }
}

TEST_CASE("graph documents round-trip") {
  const Graph g = generate_specialization_graph(30, 4, 0.2, 5).graph;
  CHECK(parse_graph(graph_to_json(g)) == g);
  const auto path = std::filesystem::temp_directory_path() / "mowst_graph_roundtrip.json";
  save_graph(g, path);
  CHECK(load_graph(path) == g);
  std::filesystem::remove(path);
}

TEST_CASE("specialization generator") {
  const SpecializationGraph sg = generate_specialization_graph(100, 8, 0.1, 7);
  const Graph& g = sg.graph;
  CHECK(g.num_nodes() == 200);

  // Homophily oracle: same-class fraction of endpoints over B-node incident edges.
  std::size_t same = 0, total = 0;
  for (auto [a, b] : g.edge_list()) {
    for (auto [x, y] : {std::pair{a, b}, std::pair{b, a}}) {
      if (sg.group[x] != NodeGroup::structure_signal) continue;
      ++total;
      same += g.labels()[x] == g.labels()[y];
    }
  }
  const double oracle = static_cast<double>(same) / static_cast<double>(total);
  std::vector<std::size_t> b_nodes;
  for (std::size_t v = 0; v < 200; ++v)
    if (sg.group[v] == NodeGroup::structure_signal) b_nodes.push_back(v);
  CHECK(homophily(g, b_nodes) == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(oracle >= 0.9);

  // Group A: class 0 sits at +1 on feature 0, class 1 at -1.
  double margin = 1e9;
  for (std::size_t v = 0; v < 100; ++v) {
    const double x0 = g.features()(v, 0);
    margin = std::min(margin, g.labels()[v] == 0 ? x0 : -x0);
  }
  CHECK(margin > 0.5);

  // Stratified 50/25/25 and disjoint.
  const auto& s = g.splits();
  CHECK(s.train.size() == 100);
  CHECK(s.val.size() == 48);
  CHECK(s.test.size() == 52);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  all.insert(s.val.begin(), s.val.end());
  all.insert(s.test.begin(), s.test.end());
  CHECK(all.size() == 200);

  CHECK(generate_specialization_graph(100, 8, 0.1, 7).graph == g);
  CHECK_THROWS_AS(generate_specialization_graph(10, 8, 0.1, 7), ConfigError);
  CHECK_THROWS_AS(generate_specialization_graph(20, 1, 0.1, 7), ConfigError);
}

TEST_CASE("zero noise makes group A features exactly class determined") {
  const SpecializationGraph sg = generate_specialization_graph(40, 3, 0.0, 2);
  for (std::size_t v = 0; v < 40; ++v) {
    CHECK(sg.graph.features()(v, 0) == (sg.graph.labels()[v] == 0 ? 1.0 : -1.0));
    CHECK(sg.graph.features()(v, 1) == 0.0);
  }
}

TEST_CASE("blindspot cancellation against a direct normalized sum") {
  for (std::size_t k : {1, 2, 3}) {
    for (std::uint64_t seed : {1, 2, 3}) {
      const BlindspotInstance inst = build_blindspot_graph(k, 4, seed);
      const Graph& g = inst.graph;
      const auto d = hop_distances(g);
      CAPTURE(k);
      std::size_t required = 0;
      for (std::size_t w = 0; w < g.num_nodes(); ++w) {
        if (std::min(d[inst.u][w], d[inst.v][w]) + 1 > k) continue;
        ++required;
        std::vector<double> acc(g.feature_dim(), 0.0);
        const double dw = static_cast<double>(g.degree(w)) + 1.0;
        for (std::size_t j = 0; j < g.feature_dim(); ++j) acc[j] += g.features()(w, j) / dw;
        for (std::size_t x : g.neighbors(w)) {
          const double c = 1.0 / std::sqrt(dw * (static_cast<double>(g.degree(x)) + 1.0));
          for (std::size_t j = 0; j < g.feature_dim(); ++j) acc[j] += c * g.features()(x, j);
        }
        for (double a : acc) CHECK(std::abs(a) < 1e-10);
      }
      CHECK(required == inst.cancelled.size());
      CHECK_NOTHROW(validate_blindspot(inst));
      // K-hop balls are disjoint.
      for (std::size_t w = 0; w < g.num_nodes(); ++w) CHECK_FALSE((d[inst.u][w] <= k && d[inst.v][w] <= k));
    }
  }
}

TEST_CASE("blindspot survives the interchange format") {
  const BlindspotInstance inst = build_blindspot_graph(2, 3, 9);
  const BlindspotInstance back = blindspot_from_graph(parse_graph(graph_to_json(inst.graph)), 2);
  CHECK_NOTHROW(validate_blindspot(back));
  CHECK(back.mirror.size() == inst.mirror.size());
}

TEST_CASE("broken blindspot instances are rejected") {
  BlindspotInstance inst = build_blindspot_graph(1, 3, 4);
  Tensor x = inst.graph.features();
  x(inst.u, 0) += 1.0;
  BlindspotInstance moved = inst;
  moved.graph = inst.graph.with_features(x);
  CHECK_THROWS_AS(validate_blindspot(moved), ValidationError);
}

TEST_CASE("k-hop sizes") {
  CHECK(khop_sizes(path3(), 2) == std::vector<double>{1.0, 7.0 / 3.0});
  const Graph isolated = Graph::build(5, 2, Tensor::zeros(5, 1), {0, 0, 0, 0, 0}, {}, {});
  CHECK(khop_sizes(isolated, 3) == std::vector<double>{1.0, 1.0, 1.0});
  std::vector<std::pair<std::size_t, std::size_t>> complete;
  for (std::size_t a = 0; a < 6; ++a)
    for (std::size_t b = a + 1; b < 6; ++b) complete.emplace_back(a, b);
  CHECK(khop_sizes(Graph::build(6, 2, Tensor::zeros(6, 1), std::vector<std::size_t>(6, 0), complete, {}), 2)[1] ==
        6.0);

  // Random graph against the distance-matrix oracle.
  std::mt19937_64 rng(12);
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::uniform_int_distribution<std::size_t> pick(0, 29);
  for (int e = 0; e < 35; ++e) edges.emplace_back(pick(rng), pick(rng));
  const Graph g = Graph::build(30, 2, Tensor::zeros(30, 1), std::vector<std::size_t>(30, 0), edges, {});
  const auto d = hop_distances(g);
  const auto b = khop_sizes(g, 4);
  for (std::size_t k = 0; k < 4; ++k) {
    double sum = 0.0;
    for (std::size_t i = 0; i < 30; ++i)
      for (std::size_t j = 0; j < 30; ++j) sum += d[i][j] <= k;
    CHECK(b[k] == doctest::Approx(sum / 30.0).epsilon(1e-14));
  }
}

TEST_CASE("cost model") {
  const Graph isolated = Graph::build(4, 2, Tensor::zeros(4, 1), {0, 0, 1, 1}, {}, {});
  CHECK(cost_estimate(isolated, 256, 3, ExpertKind::weak) == 196608.0);
  CHECK(cost_estimate(isolated, 256, 3, ExpertKind::gcn) == 196608.0);
  const std::vector<double> b{1.0, 5.0};
  CHECK(cost_estimate(b, 2, 2, ExpertKind::gcn) == 24.0);
  CHECK(cost_estimate(b, 2, 2, ExpertKind::gcn_skip) == 48.0);
  // Path: b = (1, 7/3), f = 3, L = 2 -> 9 (7/3 + 1) = 30.
  CHECK(cost_estimate(path3(), 3, 2, ExpertKind::gcn) == doctest::Approx(30.0).epsilon(1e-15));
  const Graph g = generate_specialization_graph(30, 4, 0.1, 1).graph;
  CHECK(cost_estimate(g, 8, 1, ExpertKind::gcn) == cost_estimate(g, 8, 1, ExpertKind::weak));
  for (std::size_t layers = 2; layers <= 3; ++layers) {
    CHECK(cost_estimate(g, 8, layers, ExpertKind::gcn) > cost_estimate(g, 8, layers, ExpertKind::weak));
  }
}

TEST_CASE("self loops in the input are dropped") {
  const Graph g = Graph::build(2, 2, Tensor::zeros(2, 1), {0, 1}, {{0, 0}, {0, 1}}, {});
  CHECK(g.num_edges() == 1);
  CHECK(g.degree(0) == 1);
}
