#include "mowst/experts.hpp"

#include <cmath>
#include <random>

#include <json.hpp>

#include "mowst/error.hpp"

namespace mowst {

using json = nlohmann::json;

std::vector<std::size_t> ExpertModel::dims() const {
  if (layers.empty()) throw ShapeError("expert has no layers");
  std::vector<std::size_t> d{layers.front().weight.rows()};
  for (const auto& l : layers) d.push_back(l.weight.cols());
  return d;
}

std::vector<Tensor*> ExpertModel::parameters() {
  std::vector<Tensor*> out;
  for (auto& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
    if (kind == ExpertKind::gcn_skip) out.push_back(&l.self_weight);
  }
  return out;
}

std::vector<const Tensor*> ExpertModel::parameters() const {
  std::vector<const Tensor*> out;
  for (const auto& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
    if (kind == ExpertKind::gcn_skip) out.push_back(&l.self_weight);
  }
  return out;
}

bool operator==(const ExpertModel& a, const ExpertModel& b) {
  if (a.kind != b.kind || a.layers.size() != b.layers.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    if (!(a.layers[i].weight == b.layers[i].weight) || !(a.layers[i].bias == b.layers[i].bias) ||
        !(a.layers[i].self_weight == b.layers[i].self_weight)) {
      return false;
    }
  }
  return true;
}

namespace {

void check_dims(std::span<const std::size_t> dims) {
  if (dims.size() < 2) throw ConfigError("an expert needs at least one layer (two dimensions)");
  for (std::size_t d : dims)
    if (d == 0) throw ConfigError("layer dimensions must be positive");
}

}  // namespace

ExpertModel init_expert(ExpertKind kind, std::span<const std::size_t> dims, std::uint64_t seed) {
  check_dims(dims);
  std::mt19937_64 rng(seed);
  ExpertModel model;
  model.kind = kind;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[i]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto draw = [&] {
      Tensor t = Tensor::zeros(dims[i], dims[i + 1]);
      for (double& x : t.values()) x = dist(rng);
      return t;
    };
    ExpertLayer layer;
    layer.weight = draw();
    layer.bias = Tensor::zeros(1, dims[i + 1]);
    if (kind == ExpertKind::gcn_skip) layer.self_weight = draw();
    model.layers.push_back(std::move(layer));
  }
  return model;
}

ExpertModel zero_expert(ExpertKind kind, std::span<const std::size_t> dims) {
  check_dims(dims);
  ExpertModel model;
  model.kind = kind;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    ExpertLayer layer;
    layer.weight = Tensor::zeros(dims[i], dims[i + 1]);
    layer.bias = Tensor::zeros(1, dims[i + 1]);
    if (kind == ExpertKind::gcn_skip) layer.self_weight = Tensor::zeros(dims[i], dims[i + 1]);
    model.layers.push_back(std::move(layer));
  }
  return model;
}

void validate_expert(const ExpertModel& model) {
  if (model.layers.empty()) throw ShapeError("expert has no layers");
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& l = model.layers[i];
    const std::string where = "layer " + std::to_string(i);
    if (l.weight.rank() != 2) throw ShapeError(where + ": weight is not a matrix");
    if (i > 0 && l.weight.rows() != model.layers[i - 1].weight.cols()) {
      throw ShapeError(where + ": weight " + l.weight.shape_string() + " does not chain with " +
                       model.layers[i - 1].weight.shape_string());
    }
    if (l.bias.rank() != 2 || l.bias.rows() != 1 || l.bias.cols() != l.weight.cols()) {
      throw ShapeError(where + ": bias " + l.bias.shape_string() + " does not match weight " +
                       l.weight.shape_string());
    }
    const bool has_self = l.self_weight.size() > 0;
    if (has_self != (model.kind == ExpertKind::gcn_skip)) {
      throw ShapeError(where + ": self weight present iff kind is gcn_skip");
    }
    if (has_self && l.self_weight.shape() != l.weight.shape()) {
      throw ShapeError(where + ": self weight " + l.self_weight.shape_string() +
                       " differs from weight " + l.weight.shape_string());
    }
  }
}

std::vector<Var> bind_parameters(Tape& tape, const ExpertModel& model, bool trainable) {
  std::vector<Var> vars;
  for (const Tensor* p : model.parameters()) {
    Tensor copy = *p;
    copy.set_requires_grad(trainable);
    vars.push_back(tape.leaf(std::move(copy)));
  }
  return vars;
}

Var record_forward(Tape& tape, const ExpertModel& model, std::span<const Var> params, Var features,
                   const std::shared_ptr<const kernels::NormalizedAdjacency>& adj, bool logits_only) {
  validate_expert(model);
  const std::size_t per_layer = model.kind == ExpertKind::gcn_skip ? 3 : 2;
  if (params.size() != per_layer * model.layers.size()) {
    throw ContractError("parameter list does not match the expert layout");
  }
  if (model.kind != ExpertKind::weak && !adj) throw ContractError("graph expert needs an adjacency");
  const std::size_t in = model.layers.front().weight.rows();
  if (tape.value(features).cols() != in) {
    throw ShapeError("features " + tape.value(features).shape_string() + " do not match first layer " +
                     model.layers.front().weight.shape_string());
  }
  if (model.kind != ExpertKind::weak && tape.value(features).rows() != adj->num_nodes) {
    throw ShapeError("feature rows " + std::to_string(tape.value(features).rows()) +
                     " differ from graph node count " + std::to_string(adj->num_nodes));
  }

  Var h = features;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Var w = params[per_layer * i];
    const Var b = params[per_layer * i + 1];
    Var z = model.kind == ExpertKind::weak ? tape.matmul(h, w) : tape.matmul(tape.propagate(adj, h), w);
    if (model.kind == ExpertKind::gcn_skip) z = tape.add(z, tape.matmul(h, params[per_layer * i + 2]));
    z = tape.add_row(z, b);
    const bool last = i + 1 == model.layers.size();
    if (!last) h = tape.relu(z);
    else h = logits_only ? z : tape.softmax_rows(z);
  }
  return h;
}

namespace {

Tensor run(const ExpertModel& model, const Tensor& features,
           const std::shared_ptr<const kernels::NormalizedAdjacency>& adj, bool logits_only) {
  Tape tape;
  const auto params = bind_parameters(tape, model, false);
  Tensor x = features;
  x.set_requires_grad(false);
  const Var out = record_forward(tape, model, params, tape.leaf(std::move(x)), adj, logits_only);
  return tape.value(out);
}

}  // namespace

Tensor weak_forward(const ExpertModel& model, const Tensor& features) {
  if (model.kind != ExpertKind::weak) throw ContractError("weak_forward needs a weak expert");
  return run(model, features, nullptr, false);
}

Tensor gcn_forward(const ExpertModel& model, const Graph& graph, const Tensor& features) {
  if (model.kind == ExpertKind::weak) throw ContractError("gcn_forward needs a graph expert");
  return run(model, features, graph.normalized_adjacency(), false);
}

Tensor gcn_logits(const ExpertModel& model, const Graph& graph, const Tensor& features) {
  if (model.kind == ExpertKind::weak) throw ContractError("gcn_logits needs a graph expert");
  return run(model, features, graph.normalized_adjacency(), true);
}

Tensor expert_forward(const ExpertModel& model, const Graph& graph) {
  return model.kind == ExpertKind::weak ? weak_forward(model, graph.features())
                                        : gcn_forward(model, graph, graph.features());
}

// ---------------------------------------------------------------- checkpoint

namespace {

json tensor_json(const Tensor& t) {
  return std::vector<double>(t.values().begin(), t.values().end());
}

Tensor tensor_from(const json& j, std::size_t rows, std::size_t cols, const std::string& where) {
  if (!j.is_array() || j.size() != rows * cols) {
    throw ValidationError(where + " must hold " + std::to_string(rows * cols) + " numbers");
  }
  std::vector<double> v;
  v.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number()) throw ValidationError(where + " contains a non-number");
    v.push_back(x.get<double>());
  }
  return Tensor::matrix(rows, cols, std::move(v));
}

}  // namespace

std::string checkpoint_to_json(const ExpertModel& model) {
  validate_expert(model);
  json layers = json::array();
  for (const auto& l : model.layers) {
    json entry = {{"weight", tensor_json(l.weight)}, {"bias", tensor_json(l.bias)}};
    if (model.kind == ExpertKind::gcn_skip) entry["self_weight"] = tensor_json(l.self_weight);
    layers.push_back(std::move(entry));
  }
  json doc = {{"kind", to_string(model.kind)}, {"dims", model.dims()}, {"layers", std::move(layers)}};
  return doc.dump();
}

ExpertModel expert_from_json(const std::string& document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what(), e.byte);
  }
  if (!doc.is_object() || !doc.contains("kind") || !doc.contains("dims") || !doc.contains("layers")) {
    throw ValidationError("checkpoint needs kind, dims and layers");
  }
  ExpertModel model;
  model.kind = expert_kind_from_string(doc["kind"].get<std::string>());
  const auto dims = doc["dims"].get<std::vector<std::size_t>>();
  check_dims(dims);
  const json& layers = doc["layers"];
  if (!layers.is_array() || layers.size() + 1 != dims.size()) {
    throw ValidationError("checkpoint layer count does not match dims");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string where = "layers[" + std::to_string(i) + "]";
    ExpertLayer l;
    l.weight = tensor_from(layers[i].at("weight"), dims[i], dims[i + 1], where + ".weight");
    l.bias = tensor_from(layers[i].at("bias"), 1, dims[i + 1], where + ".bias");
    if (model.kind == ExpertKind::gcn_skip) {
      l.self_weight = tensor_from(layers[i].at("self_weight"), dims[i], dims[i + 1], where + ".self_weight");
    }
    model.layers.push_back(std::move(l));
  }
  validate_expert(model);
  return model;
}

}  // namespace mowst
