#include "mowst/training.hpp"

#include <cmath>
#include <limits>

#include <json.hpp>

#include "mowst/error.hpp"

namespace mowst {

using json = nlohmann::json;

const char* to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::mowst_in_turn: return "mowst_in_turn";
    case TrainMode::mowst_joint: return "mowst_joint";
    case TrainMode::mowst_star: return "mowst_star";
  }
  return "?";
}

TrainMode train_mode_from_string(const std::string& name) {
  if (name == "mowst_in_turn") return TrainMode::mowst_in_turn;
  if (name == "mowst_joint") return TrainMode::mowst_joint;
  if (name == "mowst_star") return TrainMode::mowst_star;
  throw ConfigError("unknown training mode '" + name + "'");
}

const char* to_string(Pretrain which) {
  switch (which) {
    case Pretrain::none: return "none";
    case Pretrain::weak: return "weak";
    case Pretrain::strong: return "strong";
    case Pretrain::both: return "both";
  }
  return "?";
}

Pretrain pretrain_from_string(const std::string& name) {
  if (name == "none") return Pretrain::none;
  if (name == "weak") return Pretrain::weak;
  if (name == "strong") return Pretrain::strong;
  if (name == "both") return Pretrain::both;
  throw ConfigError("unknown pretrain option '" + name + "'");
}

void validate_config(const TrainConfig& c) {
  if (c.rounds == 0) throw ConfigError("rounds must be positive");
  if (c.max_epochs == 0) throw ConfigError("max_epochs must be positive");
  if (c.patience == 0) throw ConfigError("patience must be positive");
  if (c.hidden == 0) throw ConfigError("hidden width must be positive");
  if (c.weak_layers == 0 || c.strong_layers == 0) throw ConfigError("layer counts must be positive");
  if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate)) {
    throw ConfigError("learning rate must be positive");
  }
  for (const auto& lr : {c.weak_learning_rate, c.strong_learning_rate}) {
    if (lr && (!(*lr >= 0.0) || !std::isfinite(*lr))) throw ConfigError("per-expert learning rate must be >= 0");
  }
  if (c.strong_kind == ExpertKind::weak) throw ConfigError("strong expert must be gcn or gcn_skip");
  if (c.pretrain != Pretrain::none && c.pretrain_epochs == 0) {
    throw ConfigError("pretrain_epochs must be positive when pretraining");
  }
  validate_spec(c.confidence);
}

namespace {

std::vector<std::size_t> stack_dims(std::size_t in, std::size_t hidden, std::size_t layers, std::size_t out) {
  std::vector<std::size_t> d{in};
  for (std::size_t i = 1; i < layers; ++i) d.push_back(hidden);
  d.push_back(out);
  return d;
}

// Thrown by apply_update when a step leaves a weight non-finite; the epoch
// loops turn it into a TrainingError.
struct Diverged {};

void apply_update(Tape& tape, std::span<const Var> vars, std::span<Tensor* const> params, double lr) {
  bool finite = true;
  for (std::size_t i = 0; i < vars.size(); ++i) {
    const auto g = tape.gradient(vars[i]);
    auto values = params[i]->values();
    for (std::size_t j = 0; j < values.size(); ++j) {
      values[j] -= lr * g[j];
      finite = finite && std::isfinite(values[j]);
    }
  }
  if (!finite) throw Diverged{};
}

// Huge but finite weights can still overflow the forward pass.
void require_finite(const Tape& tape, Var probs) {
  for (double x : tape.value(probs).values())
    if (!std::isfinite(x)) throw Diverged{};
}

struct Targets {
  Tensor train;
  std::optional<Tensor> val;
};

Targets make_targets(const Graph& graph) {
  if (graph.splits().train.empty()) throw ConfigError("graph has an empty train split");
  Targets t{target_matrix(graph.labels(), graph.num_classes(), graph.splits().train), std::nullopt};
  if (!graph.splits().val.empty()) t.val = target_matrix(graph.labels(), graph.num_classes(), graph.splits().val);
  return t;
}

// Early stopping on validation loss (train loss when there is no validation
// split), capped at max_epochs updates. Records one row per evaluated epoch.
template <typename Step>
void run_phase(std::size_t max_epochs, std::size_t patience, std::size_t round, const std::string& turn,
               TrainReport& report, Step&& step) {
  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < max_epochs; ++epoch) {
    const std::string where = turn + " turn of round " + std::to_string(round);
    bool keep_going = false;
    try {
      keep_going = step(epoch, [&](double train_loss, double val_loss) {
        if (!std::isfinite(train_loss) || !std::isfinite(val_loss)) {
          throw TrainingError("loss became non-finite in " + where, epoch);
        }
        report.losses.push_back({round, turn, epoch, train_loss, val_loss});
        if (val_loss < best) {
          best = val_loss;
          stale = 0;
        } else if (++stale >= patience) {
          return false;
        }
        return true;
      });
    } catch (const Diverged&) {
      throw TrainingError("weights became non-finite in " + where, epoch);
    }
    if (!keep_going) break;
  }
}

// One epoch of the mixture objective: forward, record losses, then (if the
// callback allows) backward and update the experts with a positive rate.
template <typename Record>
bool mixture_epoch(MowstModel& m, const Graph& graph, const Targets& targets, bool star, double lr_weak,
                   double lr_strong, Record&& record) {
  Tape tape;
  const auto adj = graph.normalized_adjacency();
  const Var x = tape.constant(graph.features());
  const bool train_weak = lr_weak > 0.0;
  const bool train_strong = lr_strong > 0.0;
  const auto wp = bind_parameters(tape, m.weak, train_weak);
  const auto gp = bind_g_parameters(tape, m.confidence, train_weak);
  const auto sp = bind_parameters(tape, m.strong, train_strong);
  const Var p = record_forward(tape, m.weak, wp, x, adj);
  const Var pp = record_forward(tape, m.strong, sp, x, adj);
  require_finite(tape, p);
  require_finite(tape, pp);
  const Var c = record_confidence(tape, p, m.confidence, gp);
  auto objective = [&](const Tensor& t) {
    return star ? record_mowst_star_loss(tape, p, pp, c, t) : record_mowst_loss(tape, p, pp, c, t);
  };
  const Var loss = objective(targets.train);
  const double train_loss = tape.value(loss).item();
  const double val_loss = targets.val ? tape.value(objective(*targets.val)).item() : train_loss;
  if (!record(train_loss, val_loss)) return false;
  if (!train_weak && !train_strong) return true;

  tape.backward(loss);
  if (train_weak) {
    apply_update(tape, wp, m.weak.parameters(), lr_weak);
    if (auto* lg = std::get_if<LearnableG>(&m.confidence.g)) apply_update(tape, gp, lg->parameters(), lr_weak);
  }
  if (train_strong) apply_update(tape, sp, m.strong.parameters(), lr_strong);
  return true;
}

void snapshot(const MowstModel& m, const Graph& graph, std::size_t round, TrainReport& report) {
  const MixtureOutput out = mixture_forward(m, graph);
  report.histograms.push_back({round, confidence_histogram(out.confidence, graph.splits().train)});
  const auto expected = infer_expected(out.weak, out.strong, out.confidence);
  const std::pair<const char*, SplitName> splits[] = {
      {"train", SplitName::train}, {"val", SplitName::val}, {"test", SplitName::test}};
  for (const auto& [name, which] : splits) {
    const auto& nodes = graph.split(which);
    if (nodes.empty()) continue;
    std::size_t hit = 0;
    for (std::size_t v : nodes) hit += expected.predicted[v] == graph.labels()[v];
    report.accuracy.push_back({round, name, static_cast<double>(hit) / static_cast<double>(nodes.size())});
  }
}

}  // namespace

MowstModel initialize_models(const TrainConfig& config, const Graph& graph) {
  validate_config(config);
  const std::size_t f = graph.feature_dim();
  const std::size_t n = graph.num_classes();
  MowstModel m;
  m.weak = init_expert(ExpertKind::weak, stack_dims(f, config.hidden, config.weak_layers, n), config.seed * 3 + 1);
  m.strong = init_expert(config.strong_kind, stack_dims(f, config.hidden, config.strong_layers, n),
                         config.seed * 3 + 2);
  m.confidence = config.confidence;
  if (auto* lg = std::get_if<LearnableG>(&m.confidence.g); lg && !lg->initialized()) {
    *lg = init_learnable_g(lg->hidden, config.seed * 3 + 3);
  }
  return m;
}

TrainResult train(const TrainConfig& config, const Graph& graph) {
  return train(config, graph, initialize_models(config, graph));
}

TrainResult train(const TrainConfig& config, const Graph& graph, MowstModel m) {
  validate_config(config);
  validate_spec(m.confidence);
  if (m.weak.kind != ExpertKind::weak) throw ConfigError("first expert must be the weak kind");
  if (m.weak.input_dim() != graph.feature_dim() || m.strong.input_dim() != graph.feature_dim() ||
      m.weak.output_dim() != graph.num_classes() || m.strong.output_dim() != graph.num_classes()) {
    throw ShapeError("expert dimensions do not match the graph");
  }
  const Targets targets = make_targets(graph);
  const double lr_weak = config.weak_learning_rate.value_or(config.learning_rate);
  const double lr_strong = config.strong_learning_rate.value_or(config.learning_rate);

  TrainReport report;
  auto pretrain_one = [&](ExpertModel& expert, const char* turn) {
    PretrainResult r = pretrain_expert(expert, graph, config.pretrain_epochs, config.learning_rate);
    for (std::size_t e = 0; e < r.train_losses.size(); ++e) {
      report.losses.push_back({0, turn, e, r.train_losses[e], std::numeric_limits<double>::quiet_NaN()});
    }
    expert = std::move(r.model);
  };
  if (config.pretrain == Pretrain::weak || config.pretrain == Pretrain::both) pretrain_one(m.weak, "pretrain_weak");
  if (config.pretrain == Pretrain::strong || config.pretrain == Pretrain::both) {
    pretrain_one(m.strong, "pretrain_strong");
  }
  snapshot(m, graph, 0, report);

  if (config.mode == TrainMode::mowst_in_turn) {
    for (std::size_t round = 1; round <= config.rounds; ++round) {
      run_phase(config.max_epochs, config.patience, round, "weak", report, [&](std::size_t, auto&& record) {
        return mixture_epoch(m, graph, targets, false, lr_weak, 0.0, record);
      });
      run_phase(config.max_epochs, config.patience, round, "strong", report, [&](std::size_t, auto&& record) {
        return mixture_epoch(m, graph, targets, false, 0.0, lr_strong, record);
      });
      snapshot(m, graph, round, report);
    }
  } else {
    const bool star = config.mode == TrainMode::mowst_star;
    run_phase(config.rounds * config.max_epochs, config.patience, 1, star ? "star" : "joint", report,
              [&](std::size_t, auto&& record) {
                return mixture_epoch(m, graph, targets, star, lr_weak, lr_strong, record);
              });
    snapshot(m, graph, 1, report);
  }
  return TrainResult{std::move(m), std::move(report)};
}

PretrainResult pretrain_expert(const ExpertModel& expert, const Graph& graph, std::size_t epochs,
                               double learning_rate, std::size_t patience) {
  if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be >= 0");
  validate_expert(expert);
  if (expert.input_dim() != graph.feature_dim() || expert.output_dim() != graph.num_classes()) {
    throw ShapeError("expert dimensions do not match the graph");
  }
  const Targets targets = make_targets(graph);
  const auto adj = graph.normalized_adjacency();
  PretrainResult result{expert, {}};
  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    Tape tape;
    const auto params = bind_parameters(tape, result.model, learning_rate > 0.0);
    const Var probs = record_forward(tape, result.model, params, tape.constant(graph.features()), adj);
    try {
      require_finite(tape, probs);
    } catch (const Diverged&) {
      throw TrainingError("pretraining outputs became non-finite", epoch);
    }
    const Var loss = record_cross_entropy(tape, probs, targets.train);
    const double train_loss = tape.value(loss).item();
    if (!std::isfinite(train_loss)) throw TrainingError("pretraining loss became non-finite", epoch);
    result.train_losses.push_back(train_loss);
    if (patience > 0) {
      const double val_loss =
          targets.val ? tape.value(record_cross_entropy(tape, probs, *targets.val)).item() : train_loss;
      if (val_loss < best) {
        best = val_loss;
        stale = 0;
      } else if (++stale >= patience) {
        break;
      }
    }
    if (learning_rate == 0.0) continue;
    tape.backward(loss);
    try {
      apply_update(tape, params, result.model.parameters(), learning_rate);
    } catch (const Diverged&) {
      throw TrainingError("pretraining weights became non-finite", epoch);
    }
  }
  return result;
}

MixtureOutput mixture_forward(const MowstModel& model, const Graph& graph) {
  Tensor p = expert_forward(model.weak, graph);
  Tensor pp = expert_forward(model.strong, graph);
  std::vector<double> c = confidences(p, model.confidence);
  return combine(std::move(p), std::move(pp), std::move(c));
}

std::vector<std::size_t> confidence_histogram(std::span<const double> confidence,
                                              std::span<const std::size_t> nodes) {
  std::vector<std::size_t> counts(kHistogramBins, 0);
  for (std::size_t v : nodes) {
    const double c = std::clamp(confidence[v], 0.0, 1.0);
    const auto bin = std::min(kHistogramBins - 1, static_cast<std::size_t>(c * kHistogramBins));
    ++counts[bin];
  }
  return counts;
}

Evaluation evaluate(const MowstModel& model, const Graph& graph, SplitName split, std::uint64_t gate_seed) {
  const auto& nodes = graph.split(split);
  if (nodes.empty()) throw ContractError("evaluation split is empty");
  const MixtureOutput out = mixture_forward(model, graph);
  const auto expected = infer_expected(out.weak, out.strong, out.confidence);
  const auto stochastic = infer_stochastic(out.weak, out.strong, out.confidence, gate_seed);
  Evaluation ev;
  std::size_t hit_e = 0, hit_s = 0;
  double conf = 0.0;
  for (std::size_t v : nodes) {
    hit_e += expected.predicted[v] == graph.labels()[v];
    hit_s += stochastic.predicted[v] == graph.labels()[v];
    conf += out.confidence[v];
  }
  const double count = static_cast<double>(nodes.size());
  ev.expected_accuracy = static_cast<double>(hit_e) / count;
  ev.stochastic_accuracy = static_cast<double>(hit_s) / count;
  ev.mean_confidence = conf / count;
  ev.histogram = confidence_histogram(out.confidence, nodes);
  return ev;
}

double expert_accuracy(const ExpertModel& expert, const Graph& graph, SplitName split) {
  const auto& nodes = graph.split(split);
  if (nodes.empty()) throw ContractError("evaluation split is empty");
  const Tensor probs = expert_forward(expert, graph);
  std::size_t hit = 0;
  for (std::size_t v : nodes) hit += argmax(probs.row(v)) == graph.labels()[v];
  return static_cast<double>(hit) / static_cast<double>(nodes.size());
}

std::string mowst_to_json(const MowstModel& model) {
  json doc = {{"weak", json::parse(checkpoint_to_json(model.weak))},
              {"strong", json::parse(checkpoint_to_json(model.strong))},
              {"confidence", json::parse(spec_to_json(model.confidence))}};
  return doc.dump();
}

MowstModel mowst_from_json(const std::string& document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what(), e.byte);
  }
  if (!doc.is_object() || !doc.contains("weak") || !doc.contains("strong") || !doc.contains("confidence")) {
    throw ValidationError("checkpoint needs weak, strong and confidence entries");
  }
  MowstModel m;
  m.weak = expert_from_json(doc["weak"].dump());
  m.strong = expert_from_json(doc["strong"].dump());
  m.confidence = spec_from_json(doc["confidence"].dump());
  return m;
}

}  // namespace mowst
