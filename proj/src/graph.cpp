#include "mowst/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mowst/error.hpp"

namespace mowst {

using json = nlohmann::json;

// ---------------------------------------------------------------- Graph

Graph Graph::build(std::size_t num_nodes, std::size_t num_classes, Tensor features,
                   std::vector<std::size_t> labels,
                   std::vector<std::pair<std::size_t, std::size_t>> edges, Splits splits) {
  if (num_nodes == 0) throw ValidationError("graph needs at least one node");
  if (num_classes == 0) throw ValidationError("num_classes must be positive");
  if (features.rank() != 2 || features.rows() != num_nodes) {
    throw ValidationError("feature matrix " + features.shape_string() + " does not have " +
                          std::to_string(num_nodes) + " rows");
  }
  if (!features.all_finite()) throw ValidationError("feature matrix contains non-finite values");
  if (labels.size() != num_nodes) {
    throw ValidationError("labels has " + std::to_string(labels.size()) + " entries, expected " +
                          std::to_string(num_nodes));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw ValidationError("labels[" + std::to_string(i) + "] = " + std::to_string(labels[i]) +
                            " out of range [0, " + std::to_string(num_classes) + ")");
    }
  }

  std::vector<std::pair<std::size_t, std::size_t>> directed;
  directed.reserve(edges.size() * 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto [a, b] = edges[i];
    if (a >= num_nodes || b >= num_nodes) {
      throw ValidationError("edges[" + std::to_string(i) + "] endpoint " +
                            std::to_string(std::max(a, b)) + " >= num_nodes " +
                            std::to_string(num_nodes));
    }
    if (a == b) continue;
    directed.emplace_back(a, b);
    directed.emplace_back(b, a);
  }
  std::sort(directed.begin(), directed.end());
  directed.erase(std::unique(directed.begin(), directed.end()), directed.end());

  std::vector<char> seen(num_nodes, 0);
  auto check_split = [&](const std::vector<std::size_t>& ids, const char* name) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] >= num_nodes) {
        throw ValidationError(std::string("splits.") + name + "[" + std::to_string(i) + "] = " +
                              std::to_string(ids[i]) + " >= num_nodes");
      }
      if (seen[ids[i]]) {
        throw ValidationError(std::string("splits.") + name + "[" + std::to_string(i) +
                              "]: node " + std::to_string(ids[i]) + " appears in more than one split");
      }
      seen[ids[i]] = 1;
    }
  };
  check_split(splits.train, "train");
  check_split(splits.val, "val");
  check_split(splits.test, "test");

  Graph g;
  g.num_nodes_ = num_nodes;
  g.num_classes_ = num_classes;
  g.offsets_.assign(num_nodes + 1, 0);
  for (const auto& [a, b] : directed) ++g.offsets_[a + 1];
  std::partial_sum(g.offsets_.begin(), g.offsets_.end(), g.offsets_.begin());
  g.columns_.reserve(directed.size());
  for (const auto& e : directed) g.columns_.push_back(e.second);
  g.features_ = std::move(features);
  g.features_.set_requires_grad(false);
  g.features_.clear_grad();
  g.labels_ = std::move(labels);
  g.splits_ = std::move(splits);

  auto adj = std::make_shared<kernels::NormalizedAdjacency>();
  adj->num_nodes = num_nodes;
  adj->offsets.assign(num_nodes + 1, 0);
  for (std::size_t w = 0; w < num_nodes; ++w) {
    const double dw = static_cast<double>(g.degree(w)) + 1.0;
    // Self term first, then neighbors in ascending id order.
    adj->columns.push_back(w);
    adj->coefficients.push_back(1.0 / std::sqrt(dw * dw));
    for (std::size_t nb : g.neighbors(w)) {
      const double dn = static_cast<double>(g.degree(nb)) + 1.0;
      adj->columns.push_back(nb);
      adj->coefficients.push_back(1.0 / std::sqrt(dw * dn));
    }
    adj->offsets[w + 1] = adj->columns.size();
  }
  g.adjacency_ = std::move(adj);
  return g;
}

const std::vector<std::size_t>& Graph::split(SplitName which) const {
  switch (which) {
    case SplitName::train: return splits_.train;
    case SplitName::val: return splits_.val;
    case SplitName::test: return splits_.test;
  }
  return splits_.train;
}

std::span<const std::size_t> Graph::neighbors(std::size_t v) const {
  return std::span<const std::size_t>(columns_).subspan(offsets_[v], offsets_[v + 1] - offsets_[v]);
}

std::vector<std::size_t> Graph::degrees() const {
  std::vector<std::size_t> d(num_nodes_);
  for (std::size_t v = 0; v < num_nodes_; ++v) d[v] = degree(v);
  return d;
}

std::vector<std::pair<std::size_t, std::size_t>> Graph::edge_list() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(num_edges());
  for (std::size_t a = 0; a < num_nodes_; ++a)
    for (std::size_t b : neighbors(a))
      if (a < b) out.emplace_back(a, b);
  return out;
}

std::shared_ptr<const kernels::NormalizedAdjacency> Graph::normalized_adjacency() const {
  return adjacency_;
}

Graph Graph::with_features(Tensor features) const {
  return build(num_nodes_, num_classes_, std::move(features), labels_, edge_list(), splits_);
}

bool operator==(const Graph& a, const Graph& b) {
  return a.num_nodes_ == b.num_nodes_ && a.num_classes_ == b.num_classes_ &&
         a.offsets_ == b.offsets_ && a.columns_ == b.columns_ && a.features_ == b.features_ &&
         a.labels_ == b.labels_ && a.splits_.train == b.splits_.train &&
         a.splits_.val == b.splits_.val && a.splits_.test == b.splits_.test;
}

// ---------------------------------------------------------------- JSON I/O

namespace {

std::size_t as_index(const json& value, const std::string& where) {
  if (!value.is_number_integer() || value.get<std::int64_t>() < 0) {
    throw ValidationError(where + " must be a non-negative integer");
  }
  return value.get<std::size_t>();
}

std::vector<std::size_t> index_array(const json& value, const std::string& where) {
  if (!value.is_array()) throw ValidationError(where + " must be an array");
  std::vector<std::size_t> out;
  out.reserve(value.size());
  for (std::size_t i = 0; i < value.size(); ++i)
    out.push_back(as_index(value[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

}  // namespace

Graph parse_graph(const std::string& document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed graph document: ") + e.what(), e.byte);
  }
  if (!doc.is_object()) throw ValidationError("graph document must be a JSON object");

  static const std::set<std::string> kKeys = {"num_nodes", "num_classes", "features",
                                              "labels",    "edges",       "splits"};
  for (const auto& item : doc.items()) {
    if (!kKeys.contains(item.key())) throw ValidationError("unknown key '" + item.key() + "'");
  }
  for (const auto& key : kKeys) {
    if (!doc.contains(key)) throw ValidationError("missing key '" + key + "'");
  }

  const std::size_t num_nodes = as_index(doc["num_nodes"], "num_nodes");
  const std::size_t num_classes = as_index(doc["num_classes"], "num_classes");

  const json& feats = doc["features"];
  if (!feats.is_array() || feats.size() != num_nodes) {
    throw ValidationError("features must be an array of num_nodes = " + std::to_string(num_nodes) +
                          " rows");
  }
  const std::size_t f = num_nodes > 0 && feats[0].is_array() ? feats[0].size() : 0;
  std::vector<double> values;
  values.reserve(num_nodes * f);
  for (std::size_t i = 0; i < num_nodes; ++i) {
    const json& row = feats[i];
    if (!row.is_array() || row.size() != f) {
      throw ValidationError("features[" + std::to_string(i) + "] has " +
                            std::to_string(row.is_array() ? row.size() : 0) + " values, expected " +
                            std::to_string(f));
    }
    for (std::size_t j = 0; j < f; ++j) {
      if (!row[j].is_number()) {
        throw ValidationError("features[" + std::to_string(i) + "][" + std::to_string(j) +
                              "] is not a number");
      }
      values.push_back(row[j].get<double>());
    }
  }

  std::vector<std::size_t> labels = index_array(doc["labels"], "labels");

  const json& edges_json = doc["edges"];
  if (!edges_json.is_array()) throw ValidationError("edges must be an array");
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  edges.reserve(edges_json.size());
  for (std::size_t i = 0; i < edges_json.size(); ++i) {
    const json& e = edges_json[i];
    const std::string where = "edges[" + std::to_string(i) + "]";
    if (!e.is_array() || e.size() != 2) throw ValidationError(where + " must be a [int, int] pair");
    edges.emplace_back(as_index(e[0], where), as_index(e[1], where));
  }

  const json& sp = doc["splits"];
  if (!sp.is_object()) throw ValidationError("splits must be an object");
  for (const auto& item : sp.items()) {
    if (item.key() != "train" && item.key() != "val" && item.key() != "test") {
      throw ValidationError("unknown key 'splits." + item.key() + "'");
    }
  }
  Splits splits;
  if (sp.contains("train")) splits.train = index_array(sp["train"], "splits.train");
  if (sp.contains("val")) splits.val = index_array(sp["val"], "splits.val");
  if (sp.contains("test")) splits.test = index_array(sp["test"], "splits.test");

  return Graph::build(num_nodes, num_classes, Tensor::matrix(num_nodes, f, std::move(values)),
                      std::move(labels), std::move(edges), std::move(splits));
}

Graph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open graph file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_graph(buf.str());
}

std::string graph_to_json(const Graph& graph) {
  json doc;
  doc["num_nodes"] = graph.num_nodes();
  doc["num_classes"] = graph.num_classes();
  json feats = json::array();
  for (std::size_t v = 0; v < graph.num_nodes(); ++v) {
    auto row = graph.features().row(v);
    feats.push_back(std::vector<double>(row.begin(), row.end()));
  }
  doc["features"] = std::move(feats);
  doc["labels"] = graph.labels();
  json edges = json::array();
  for (const auto& [a, b] : graph.edge_list()) edges.push_back({a, b});
  doc["edges"] = std::move(edges);
  doc["splits"] = {{"train", graph.splits().train},
                   {"val", graph.splits().val},
                   {"test", graph.splits().test}};
  return doc.dump();
}

void save_graph(const Graph& graph, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write graph file " + path.string());
  out << graph_to_json(graph) << '\n';
}

// ---------------------------------------------------------------- generators

namespace {

// Shuffles each stratum and cuts it 50/25/25.
Splits stratified_split(const std::vector<std::vector<std::size_t>>& strata, std::mt19937_64& rng) {
  Splits s;
  for (auto stratum : strata) {
    std::shuffle(stratum.begin(), stratum.end(), rng);
    const std::size_t n_train = stratum.size() / 2;
    const std::size_t n_val = stratum.size() / 4;
    for (std::size_t i = 0; i < stratum.size(); ++i) {
      if (i < n_train) s.train.push_back(stratum[i]);
      else if (i < n_train + n_val) s.val.push_back(stratum[i]);
      else s.test.push_back(stratum[i]);
    }
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

}  // namespace

SpecializationGraph generate_specialization_graph(std::size_t n_per_group, std::size_t f,
                                                  double noise, std::uint64_t seed) {
  if (n_per_group < 20) throw ConfigError("n_per_group must be at least 20");
  if (f < 2) throw ConfigError("feature dimension must be at least 2");
  if (!(noise >= 0.0 && noise < 1.0)) throw ConfigError("noise must lie in [0, 1)");

  constexpr std::size_t kEdgesPerNode = 4;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  const std::size_t n = 2 * n_per_group;
  std::vector<std::size_t> labels(n);
  std::vector<NodeGroup> group(n);
  for (std::size_t g = 0; g < 2; ++g) {
    std::vector<std::size_t> block(n_per_group);
    for (std::size_t i = 0; i < n_per_group; ++i) block[i] = i % 2;
    std::shuffle(block.begin(), block.end(), rng);
    for (std::size_t i = 0; i < n_per_group; ++i) {
      labels[g * n_per_group + i] = block[i];
      group[g * n_per_group + i] = g == 0 ? NodeGroup::feature_signal : NodeGroup::structure_signal;
    }
  }

  Tensor features = Tensor::zeros(n, f);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t j = 0; j < f; ++j) features(v, j) = noise * unit(rng);
    if (group[v] == NodeGroup::feature_signal) features(v, 0) += labels[v] == 0 ? 1.0 : -1.0;
  }

  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<std::size_t> pool_a(n_per_group);
  std::iota(pool_a.begin(), pool_a.end(), 0);
  std::vector<std::vector<std::size_t>> pool_b(2);
  for (std::size_t v = n_per_group; v < n; ++v) pool_b[labels[v]].push_back(v);

  auto wire = [&](std::size_t v, const std::vector<std::size_t>& pool) {
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::size_t added = 0;
    while (added < kEdgesPerNode) {
      const std::size_t w = pool[pick(rng)];
      if (w == v) continue;
      edges.emplace_back(v, w);
      ++added;
    }
  };
  for (std::size_t v = 0; v < n_per_group; ++v) wire(v, pool_a);
  // Structure-signal nodes also get one same-class feature-signal neighbor;
  // without it no neighborhood in their component would carry class signal.
  std::vector<std::vector<std::size_t>> anchors(2);
  for (std::size_t v = 0; v < n_per_group; ++v) anchors[labels[v]].push_back(v);
  for (std::size_t v = n_per_group; v < n; ++v) {
    wire(v, pool_b[labels[v]]);
    const auto& pool = anchors[labels[v]];
    edges.emplace_back(v, pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)]);
  }

  std::vector<std::vector<std::size_t>> strata(4);
  for (std::size_t v = 0; v < n; ++v) strata[(v < n_per_group ? 0 : 2) + labels[v]].push_back(v);
  Splits splits = stratified_split(strata, rng);

  return SpecializationGraph{
      Graph::build(n, 2, std::move(features), std::move(labels), std::move(edges), std::move(splits)),
      std::move(group)};
}

double homophily(const Graph& graph, std::span<const std::size_t> nodes) {
  std::size_t same = 0;
  std::size_t total = 0;
  for (std::size_t v : nodes) {
    for (std::size_t w : graph.neighbors(v)) {
      ++total;
      if (graph.labels()[v] == graph.labels()[w]) ++same;
    }
  }
  return total == 0 ? 1.0 : static_cast<double>(same) / static_cast<double>(total);
}

std::vector<double> normalized_feature_sum(const Graph& graph, std::size_t w) {
  const auto& adj = *graph.normalized_adjacency();
  const std::size_t f = graph.feature_dim();
  std::vector<double> out(f, 0.0);
  for (std::size_t e = adj.offsets[w]; e < adj.offsets[w + 1]; ++e) {
    auto x = graph.features().row(adj.columns[e]);
    for (std::size_t j = 0; j < f; ++j) out[j] += adj.coefficients[e] * x[j];
  }
  return out;
}

namespace {

// Nodes within `radius` hops of root, with their hop distance.
std::vector<std::pair<std::size_t, std::size_t>> ball(const Graph& g, std::size_t root,
                                                      std::size_t radius) {
  std::vector<std::size_t> dist(g.num_nodes(), SIZE_MAX);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::queue<std::size_t> q;
  dist[root] = 0;
  q.push(root);
  while (!q.empty()) {
    const std::size_t w = q.front();
    q.pop();
    out.emplace_back(w, dist[w]);
    if (dist[w] == radius) continue;
    for (std::size_t nb : g.neighbors(w)) {
      if (dist[nb] == SIZE_MAX) {
        dist[nb] = dist[w] + 1;
        q.push(nb);
      }
    }
  }
  return out;
}

}  // namespace

BlindspotInstance build_blindspot_graph(std::size_t k, std::size_t f, std::uint64_t seed) {
  if (k < 1) throw ConfigError("blindspot radius K must be at least 1");
  if (f < 2) throw ConfigError("feature dimension must be at least 2");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_int_distribution<std::size_t> extra(1, 2);

  // One tree shape, instantiated twice: tree node i becomes graph node 2i on
  // u's side and 2i + 1 on v's side. children[i][0] is the designated child.
  std::vector<std::vector<std::size_t>> children(1);
  std::vector<std::size_t> depth{0};
  std::vector<std::size_t> parent{SIZE_MAX};
  for (std::size_t i = 0; i < children.size(); ++i) {
    if (depth[i] == k) continue;
    const std::size_t count = 1 + extra(rng);
    for (std::size_t c = 0; c < count; ++c) {
      const std::size_t id = children.size();
      children[i].push_back(id);
      children.emplace_back();
      depth.push_back(depth[i] + 1);
      parent.push_back(i);
    }
  }
  const std::size_t tree_size = children.size();
  const std::size_t n = 2 * tree_size;

  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < tree_size; ++i) {
    for (std::size_t c : children[i]) {
      edges.emplace_back(2 * i, 2 * c);
      edges.emplace_back(2 * i + 1, 2 * c + 1);
    }
  }

  std::vector<double> tree_degree(tree_size);
  for (std::size_t i = 0; i < tree_size; ++i) {
    tree_degree[i] = static_cast<double>(children[i].size() + (i == 0 ? 0 : 1));
  }

  Tensor features = Tensor::zeros(n, f);
  for (std::size_t side = 0; side < 2; ++side) {
    auto x = [&](std::size_t tree_node) { return 2 * tree_node + side; };
    for (std::size_t j = 0; j < f; ++j) features(x(0), j) = unit(rng);
    // Breadth-first: node i's own feature and its parent's are fixed before
    // its children are assigned, so each designated child absorbs the
    // residual of its parent's normalized sum.
    for (std::size_t i = 0; i < tree_size; ++i) {
      if (depth[i] >= k) continue;
      const double di = tree_degree[i] + 1.0;
      std::vector<double> residual(f);
      for (std::size_t j = 0; j < f; ++j) residual[j] = features(x(i), j) / di;
      if (i != 0) {
        const double dp = tree_degree[parent[i]] + 1.0;
        for (std::size_t j = 0; j < f; ++j)
          residual[j] += features(x(parent[i]), j) / std::sqrt(di * dp);
      }
      for (std::size_t c = 1; c < children[i].size(); ++c) {
        const std::size_t child = children[i][c];
        const double dc = tree_degree[child] + 1.0;
        for (std::size_t j = 0; j < f; ++j) {
          features(x(child), j) = unit(rng);
          residual[j] += features(x(child), j) / std::sqrt(di * dc);
        }
      }
      const std::size_t star = children[i][0];
      const double ds = tree_degree[star] + 1.0;
      for (std::size_t j = 0; j < f; ++j) features(x(star), j) = -residual[j] * std::sqrt(di * ds);
    }
  }

  std::vector<std::size_t> labels(n);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t v = 0; v < n; ++v) labels[v] = coin(rng) ? 1 : 0;
  labels[0] = 0;
  labels[1] = 1;

  std::vector<std::size_t> others(n - 2);
  std::iota(others.begin(), others.end(), 2);
  Splits splits = stratified_split({others}, rng);
  splits.train.insert(splits.train.begin(), {0, 1});
  std::sort(splits.train.begin(), splits.train.end());

  Graph graph = Graph::build(n, 2, std::move(features), std::move(labels), std::move(edges),
                             std::move(splits));
  return blindspot_from_graph(std::move(graph), k);
}

BlindspotInstance blindspot_from_graph(Graph graph, std::size_t k) {
  BlindspotInstance inst;
  inst.u = 0;
  inst.v = 1;
  inst.k = k;
  if (graph.num_nodes() < 2) throw ValidationError("blindspot graph needs nodes 0 and 1");
  for (const auto& [w, d] : ball(graph, inst.u, k)) {
    inst.mirror.emplace_back(w, w + 1);
    if (d + 1 <= k) inst.cancelled.push_back(w);
  }
  for (const auto& [w, d] : ball(graph, inst.v, k)) {
    if (d + 1 <= k) inst.cancelled.push_back(w);
  }
  std::sort(inst.mirror.begin(), inst.mirror.end());
  std::sort(inst.cancelled.begin(), inst.cancelled.end());
  inst.graph = std::move(graph);
  validate_blindspot(inst);
  return inst;
}

void validate_blindspot(const BlindspotInstance& inst, double tol) {
  const Graph& g = inst.graph;
  if (inst.u >= g.num_nodes() || inst.v >= g.num_nodes()) {
    throw ValidationError("blindspot endpoints out of range");
  }
  const auto ball_u = ball(g, inst.u, inst.k);
  const auto ball_v = ball(g, inst.v, inst.k);
  std::vector<char> in_u(g.num_nodes(), 0), in_v(g.num_nodes(), 0);
  for (const auto& [w, d] : ball_u) in_u[w] = 1;
  for (const auto& [w, d] : ball_v) {
    in_v[w] = 1;
    if (in_u[w]) throw ValidationError("K-hop neighborhoods of u and v overlap at node " + std::to_string(w));
  }

  // Isomorphism of the induced K-hop subgraphs under the recorded mapping.
  if (inst.mirror.size() != ball_u.size() || ball_u.size() != ball_v.size()) {
    throw ValidationError("mirror mapping does not cover both K-hop neighborhoods");
  }
  std::vector<std::size_t> image(g.num_nodes(), SIZE_MAX);
  for (const auto& [a, b] : inst.mirror) {
    if (a >= g.num_nodes() || b >= g.num_nodes() || !in_u[a] || !in_v[b]) {
      throw ValidationError("mirror pair (" + std::to_string(a) + ", " + std::to_string(b) +
                            ") leaves the neighborhoods");
    }
    image[a] = b;
  }
  if (image[inst.u] != inst.v) throw ValidationError("mirror does not map u to v");
  for (const auto& [a, d] : ball_u) {
    for (std::size_t nb : g.neighbors(a)) {
      if (!in_u[nb]) continue;
      const auto nv = g.neighbors(image[a]);
      if (!std::binary_search(nv.begin(), nv.end(), image[nb])) {
        throw ValidationError("edge (" + std::to_string(a) + ", " + std::to_string(nb) +
                              ") has no mirrored counterpart");
      }
    }
    if (d < inst.k && g.degree(a) != g.degree(image[a])) {
      throw ValidationError("degree mismatch between node " + std::to_string(a) + " and its mirror");
    }
  }
  std::size_t edges_u = 0, edges_v = 0;
  for (const auto& [a, d] : ball_u)
    for (std::size_t nb : g.neighbors(a)) edges_u += in_u[nb];
  for (const auto& [a, d] : ball_v)
    for (std::size_t nb : g.neighbors(a)) edges_v += in_v[nb];
  if (edges_u != edges_v) throw ValidationError("induced subgraphs have different edge counts");

  for (std::size_t w : inst.cancelled) {
    for (double s : normalized_feature_sum(g, w)) {
      if (!(std::abs(s) < tol)) {
        throw ValidationError("normalized feature sum at node " + std::to_string(w) +
                              " is not cancelled (|" + std::to_string(s) + "|)");
      }
    }
  }
  const auto xu = g.features().row(inst.u);
  const auto xv = g.features().row(inst.v);
  if (std::equal(xu.begin(), xu.end(), xv.begin())) throw ValidationError("x_u equals x_v");
}

// ---------------------------------------------------------------- cost model

std::vector<double> khop_sizes(const Graph& graph, std::size_t layers) {
  if (layers < 1) throw ConfigError("layer count must be at least 1");
  std::vector<double> totals(layers, 0.0);
  for (std::size_t v = 0; v < graph.num_nodes(); ++v) {
    std::vector<std::size_t> count(layers, 0);
    for (const auto& [w, d] : ball(graph, v, layers - 1)) ++count[d];
    std::size_t running = 0;
    for (std::size_t k = 0; k < layers; ++k) {
      running += count[k];
      totals[k] += static_cast<double>(running);
    }
  }
  for (double& t : totals) t /= static_cast<double>(graph.num_nodes());
  return totals;
}

const char* to_string(ExpertKind kind) {
  switch (kind) {
    case ExpertKind::weak: return "weak";
    case ExpertKind::gcn: return "gcn";
    case ExpertKind::gcn_skip: return "gcn_skip";
  }
  return "?";
}

ExpertKind expert_kind_from_string(const std::string& name) {
  if (name == "weak" || name == "mlp") return ExpertKind::weak;
  if (name == "gcn") return ExpertKind::gcn;
  if (name == "gcn_skip") return ExpertKind::gcn_skip;
  throw ConfigError("unknown expert kind '" + name + "'");
}

double cost_estimate(std::span<const double> khop, std::size_t f, std::size_t layers,
                     ExpertKind architecture) {
  if (layers < 1 || f < 1) throw ConfigError("cost model needs f >= 1 and L >= 1");
  const double f2 = static_cast<double>(f) * static_cast<double>(f);
  if (architecture == ExpertKind::weak) return f2 * static_cast<double>(layers);
  if (khop.size() < layers) throw ConfigError("need b_0..b_{L-1} for the GCN cost");
  double reach = 0.0;
  for (std::size_t i = 1; i <= layers; ++i) reach += khop[layers - i];
  const double gcn = f2 * reach;
  return architecture == ExpertKind::gcn_skip ? 2.0 * gcn : gcn;
}

double cost_estimate(const Graph& graph, std::size_t f, std::size_t layers, ExpertKind architecture) {
  const auto b = khop_sizes(graph, layers);
  return cost_estimate(b, f, layers, architecture);
}

}  // namespace mowst
