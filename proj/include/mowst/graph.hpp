#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mowst/kernels.hpp"
#include "mowst/tensor.hpp"

namespace mowst {

struct Splits {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

enum class SplitName { train, val, test };

// Undirected, unweighted attributed graph. Immutable once built; the
// adjacency is stored as sorted CSR without self loops.
class Graph {
 public:
  // Validates and normalizes the inputs: edges are symmetrized, deduplicated,
  // and self loops dropped.
  static Graph build(std::size_t num_nodes, std::size_t num_classes, Tensor features,
                     std::vector<std::size_t> labels,
                     std::vector<std::pair<std::size_t, std::size_t>> edges, Splits splits);

  std::size_t num_nodes() const noexcept { return num_nodes_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  std::size_t feature_dim() const noexcept { return features_.cols(); }
  std::size_t num_edges() const noexcept { return columns_.size() / 2; }

  const Tensor& features() const noexcept { return features_; }
  const std::vector<std::size_t>& labels() const noexcept { return labels_; }
  const Splits& splits() const noexcept { return splits_; }
  const std::vector<std::size_t>& split(SplitName which) const;

  std::span<const std::size_t> neighbors(std::size_t v) const;
  std::size_t degree(std::size_t v) const { return offsets_[v + 1] - offsets_[v]; }
  std::vector<std::size_t> degrees() const;

  // Each undirected edge once, as (a, b) with a < b, in lexicographic order.
  std::vector<std::pair<std::size_t, std::size_t>> edge_list() const;

  // Symmetric-normalized closed-neighborhood operator, built once and shared.
  std::shared_ptr<const kernels::NormalizedAdjacency> normalized_adjacency() const;

  // Copy with replaced node features (same structure, labels and splits).
  Graph with_features(Tensor features) const;

  friend bool operator==(const Graph& a, const Graph& b);

 private:
  std::size_t num_nodes_ = 0;
  std::size_t num_classes_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> columns_;
  Tensor features_;
  std::vector<std::size_t> labels_;
  Splits splits_;
  std::shared_ptr<const kernels::NormalizedAdjacency> adjacency_;
};

// Interchange document (UTF-8 JSON).
Graph parse_graph(const std::string& document);
Graph load_graph(const std::filesystem::path& path);
std::string graph_to_json(const Graph& graph);
void save_graph(const Graph& graph, const std::filesystem::path& path);

// ------------------------------------------------------------ generators

enum class NodeGroup { feature_signal, structure_signal };

struct SpecializationGraph {
  Graph graph;
  // group[v]: feature_signal for ids [0, n_per_group), structure_signal for
  // ids [n_per_group, 2 n_per_group).
  std::vector<NodeGroup> group;
};

// Binary-class benchmark with two node populations. Feature-signal nodes carry
// their class in feature 0 (+1 / -1 plus uniform noise) and are wired to
// random feature-signal nodes regardless of class. Structure-signal nodes have
// class-independent features and are wired to same-class structure-signal
// nodes plus one same-class feature-signal node. Split 50/25/25, stratified
// by (group, class).
SpecializationGraph generate_specialization_graph(std::size_t n_per_group, std::size_t f,
                                                  double noise, std::uint64_t seed);

// Fraction of edge endpoints (over the given nodes' incident edges) that join
// two same-class nodes.
double homophily(const Graph& graph, std::span<const std::size_t> nodes);

struct BlindspotInstance {
  Graph graph;
  std::size_t u = 0;
  std::size_t v = 0;
  std::size_t k = 1;
  // mirror[w] for every w in u's K-hop ball: its image in v's ball.
  std::vector<std::pair<std::size_t, std::size_t>> mirror;
  // Nodes within K-1 hops of u or v; their normalized closed-neighborhood
  // feature sums vanish.
  std::vector<std::size_t> cancelled;
};

// Two mirrored random trees of depth K rooted at u and v. Features of every
// node within K-1 hops are cancelled by solving for one designated child.
BlindspotInstance build_blindspot_graph(std::size_t k, std::size_t f, std::uint64_t seed);

// Normalized closed-neighborhood sum of raw features at node w.
std::vector<double> normalized_feature_sum(const Graph& graph, std::size_t w);

// Throws ValidationError if any BlindspotInstance invariant fails.
void validate_blindspot(const BlindspotInstance& instance, double tol = 1e-10);

// Reconstructs u, v, mirror and cancelled set for a graph that was produced by
// build_blindspot_graph and round-tripped through the interchange format
// (u = 0, v = 1 by construction).
BlindspotInstance blindspot_from_graph(Graph graph, std::size_t k);

// ------------------------------------------------------------ cost model

// b_0..b_{L-1}: average number of nodes within k hops (node itself included).
std::vector<double> khop_sizes(const Graph& graph, std::size_t layers);

enum class ExpertKind { weak, gcn, gcn_skip };

const char* to_string(ExpertKind kind);
ExpertKind expert_kind_from_string(const std::string& name);

// Multiply-accumulate count per target node.
double cost_estimate(std::span<const double> khop, std::size_t f, std::size_t layers,
                     ExpertKind architecture);
double cost_estimate(const Graph& graph, std::size_t f, std::size_t layers, ExpertKind architecture);

}  // namespace mowst
