#include "mowst/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "mowst/error.hpp"
#include "mowst/graph.hpp"
#include "mowst/mixture.hpp"
#include "mowst/theory.hpp"

namespace mowst {

namespace {

using json = nlohmann::json;

// ---------------------------------------------------------------- config

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& obj, const char* key, T& target, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    target = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

template <typename T>
void read(const json& obj, const char* key, std::optional<T>& target, const std::string& where) {
  if (!obj.contains(key)) return;
  T value{};
  read(obj, key, value, where);
  target = value;
}

const json& section(const json& doc, const char* key) {
  const json& s = doc.at(key);
  if (!s.is_object()) throw ConfigError(std::string("section '") + key + "' must be an object");
  return s;
}

void parse_data(const json& s, DataSource& d) {
  reject_unknown(s, {"path", "generator", "n_per_group", "f", "noise", "k"}, "data");
  std::optional<std::string> path;
  read(s, "path", path, "data");
  if (path) d.path = *path;
  read(s, "generator", d.generator, "data");
  read(s, "n_per_group", d.n_per_group, "data");
  read(s, "f", d.f, "data");
  read(s, "noise", d.noise, "data");
  read(s, "k", d.k, "data");
}

void parse_train(const json& s, TrainConfig& t) {
  reject_unknown(s,
                 {"mode", "rounds", "max_epochs", "learning_rate", "weak_learning_rate", "strong_learning_rate",
                  "patience", "pretrain", "pretrain_epochs", "strong", "hidden", "weak_layers", "strong_layers",
                  "gate_seed"},
                 "train");
  std::string name;
  if (s.contains("mode")) {
    read(s, "mode", name, "train");
    t.mode = train_mode_from_string(name);
  }
  read(s, "rounds", t.rounds, "train");
  read(s, "max_epochs", t.max_epochs, "train");
  read(s, "learning_rate", t.learning_rate, "train");
  read(s, "weak_learning_rate", t.weak_learning_rate, "train");
  read(s, "strong_learning_rate", t.strong_learning_rate, "train");
  read(s, "patience", t.patience, "train");
  if (s.contains("pretrain")) {
    read(s, "pretrain", name, "train");
    t.pretrain = pretrain_from_string(name);
  }
  read(s, "pretrain_epochs", t.pretrain_epochs, "train");
  if (s.contains("strong")) {
    read(s, "strong", name, "train");
    t.strong_kind = expert_kind_from_string(name);
  }
  read(s, "hidden", t.hidden, "train");
  read(s, "weak_layers", t.weak_layers, "train");
  read(s, "strong_layers", t.strong_layers, "train");
  read(s, "gate_seed", t.gate_seed, "train");
}

void parse_verify(const json& s, VerifySettings& v) {
  reject_unknown(s,
                 {"suite", "binary", "ternary", "step_tightness", "two_level_tightness", "eta", "corollary",
                  "quasiconvexity_trials", "strict_pairs", "minimizer_problems", "concavity_triples",
                  "blindspot_draws", "blindspot_k", "blindspot_f"},
                 "verify");
  read(s, "suite", v.suite, "verify");
  read(s, "binary", v.binary, "verify");
  read(s, "ternary", v.ternary, "verify");
  read(s, "step_tightness", v.step_tightness, "verify");
  read(s, "two_level_tightness", v.two_level_tightness, "verify");
  read(s, "eta", v.eta, "verify");
  read(s, "corollary", v.corollary, "verify");
  read(s, "quasiconvexity_trials", v.quasiconvexity_trials, "verify");
  read(s, "strict_pairs", v.strict_pairs, "verify");
  read(s, "minimizer_problems", v.minimizer_problems, "verify");
  read(s, "concavity_triples", v.concavity_triples, "verify");
  read(s, "blindspot_draws", v.blindspot_draws, "verify");
  read(s, "blindspot_k", v.blindspot_k, "verify");
  read(s, "blindspot_f", v.blindspot_f, "verify");
}

// ---------------------------------------------------------------- output

std::string num(double x) {
  if (std::isnan(x)) return "";
  std::ostringstream s;
  s << std::setprecision(12) << x;
  return s.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << content;
  if (!f) throw ConfigError("cannot write " + path.string());
}

std::filesystem::path prepare_out(const RunConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.out, ec);
  if (ec || !std::filesystem::is_directory(cfg.out)) {
    throw ConfigError("output directory " + cfg.out.string() + " is not writable");
  }
  return cfg.out;
}

std::uint64_t require_seed(const RunConfig& cfg) {
  if (!cfg.seed) throw ConfigError("a seed is required (--seed N or \"seed\" in the config)");
  return *cfg.seed;
}

Graph load_data(const RunConfig& cfg) {
  const DataSource& d = cfg.data;
  if (d.path.has_value() == d.generator.has_value()) {
    throw ConfigError("exactly one data source is required (--graph PATH or data.generator)");
  }
  if (d.path) return load_graph(*d.path);
  if (*d.generator == "specialization") {
    return generate_specialization_graph(d.n_per_group, d.f, d.noise, require_seed(cfg)).graph;
  }
  if (*d.generator == "blindspot") return build_blindspot_graph(d.k, d.f, require_seed(cfg)).graph;
  throw ConfigError("unknown generator '" + *d.generator + "'");
}

// ---------------------------------------------------------------- commands

int cmd_gen(const RunConfig& cfg, std::ostream& out) {
  const std::uint64_t seed = require_seed(cfg);
  const DataSource& d = cfg.data;
  const std::string kind = d.generator.value_or("specialization");
  const auto dir = prepare_out(cfg);
  Graph graph = [&] {
    if (kind == "specialization") return generate_specialization_graph(d.n_per_group, d.f, d.noise, seed).graph;
    if (kind == "blindspot") {
      BlindspotInstance inst = build_blindspot_graph(d.k, d.f, seed);
      validate_blindspot(inst);
      return inst.graph;
    }
    throw ConfigError("unknown generator '" + kind + "'");
  }();
  save_graph(graph, dir / "graph.json");
  out << "wrote " << (dir / "graph.json").string() << " (" << graph.num_nodes() << " nodes, "
      << graph.num_edges() << " edges)\n";
  return kExitOk;
}

std::string loss_csv(const TrainReport& report) {
  std::ostringstream s;
  s << "round,turn,epoch,train_loss,val_loss\n";
  for (const auto& r : report.losses) {
    s << r.round << ',' << r.turn << ',' << r.epoch << ',' << num(r.train_loss) << ',' << num(r.val_loss) << '\n';
  }
  return s.str();
}

std::string histogram_csv(const TrainReport& report) {
  std::ostringstream s;
  s << "round,bin_lo,bin_hi,count\n";
  const double width = 1.0 / static_cast<double>(kHistogramBins);
  for (const auto& h : report.histograms) {
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      s << h.round << ',' << num(width * static_cast<double>(b)) << ',' << num(width * static_cast<double>(b + 1))
        << ',' << h.counts[b] << '\n';
    }
  }
  return s.str();
}

std::string metrics_csv(const MowstModel& model, const Graph& graph, std::uint64_t gate_seed) {
  std::ostringstream s;
  s << "split,mode,accuracy\n";
  const std::pair<SplitName, const char*> splits[] = {
      {SplitName::train, "train"}, {SplitName::val, "val"}, {SplitName::test, "test"}};
  for (const auto& [split, name] : splits) {
    if (graph.split(split).empty()) continue;
    const Evaluation ev = evaluate(model, graph, split, gate_seed);
    s << name << ",expected," << num(ev.expected_accuracy) << '\n';
    s << name << ",stochastic," << num(ev.stochastic_accuracy) << '\n';
    s << name << ",weak_expert," << num(expert_accuracy(model.weak, graph, split)) << '\n';
    s << name << ",strong_expert," << num(expert_accuracy(model.strong, graph, split)) << '\n';
  }
  return s.str();
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  TrainConfig tc = cfg.train;
  tc.seed = require_seed(cfg);
  validate_config(tc);
  const Graph graph = load_data(cfg);
  const auto dir = prepare_out(cfg);
  const TrainResult result = train(tc, graph);
  write_file(dir / "checkpoint.json", mowst_to_json(result.model));
  write_file(dir / "loss.csv", loss_csv(result.report));
  write_file(dir / "confidence_hist.csv", histogram_csv(result.report));
  const std::string metrics = metrics_csv(result.model, graph, tc.gate_seed);
  write_file(dir / "metrics.csv", metrics);
  out << metrics;
  return kExitOk;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read " + path.string());
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

int cmd_infer(const RunConfig& cfg, std::ostream& out) {
  const std::uint64_t seed = require_seed(cfg);
  if (!cfg.checkpoint) throw ConfigError("infer needs --checkpoint PATH");
  if (cfg.infer_mode != "stochastic" && cfg.infer_mode != "expected") {
    throw ConfigError("unknown inference mode '" + cfg.infer_mode + "'");
  }
  const MowstModel model = mowst_from_json(read_text(*cfg.checkpoint));
  const Graph graph = load_data(cfg);
  const auto dir = prepare_out(cfg);
  const MixtureOutput mix = mixture_forward(model, graph);

  std::ostringstream s;
  s << "node_id,expert,confidence,pred_class,true_class\n";
  std::size_t hits = 0;
  auto row = [&](std::size_t v, const char* expert, std::size_t pred) {
    s << v << ',' << expert << ',' << num(mix.confidence[v]) << ',' << pred << ',' << graph.labels()[v] << '\n';
    hits += pred == graph.labels()[v];
  };
  if (cfg.infer_mode == "expected") {
    const auto pred = infer_expected(mix.weak, mix.strong, mix.confidence);
    for (std::size_t v = 0; v < graph.num_nodes(); ++v) row(v, "expected", pred.predicted[v]);
  } else {
    const auto pred = infer_stochastic(mix.weak, mix.strong, mix.confidence, seed);
    for (std::size_t v = 0; v < graph.num_nodes(); ++v) {
      row(v, pred.weak_fired[v] ? "weak" : "strong", pred.predicted[v]);
    }
  }
  write_file(dir / "predictions.csv", s.str());
  out << "accuracy (all nodes, " << cfg.infer_mode << "): "
      << num(static_cast<double>(hits) / static_cast<double>(graph.num_nodes())) << '\n';
  return kExitOk;
}

void append_rows(std::vector<ReportRow>& all, std::vector<ReportRow> rows, const char* suite, std::ostream& out) {
  std::size_t failed = 0;
  for (const auto& r : rows) failed += !r.pass;
  out << suite << ": " << rows.size() - failed << "/" << rows.size() << " clauses pass\n";
  all.insert(all.end(), std::make_move_iterator(rows.begin()), std::make_move_iterator(rows.end()));
}

std::vector<ReportRow> blindspot_rows(const VerifySettings& v, std::uint64_t seed) {
  std::vector<ReportRow> rows;
  const ConfidenceSpec gate{Dispersion::variance, StepG{0.0}};
  for (std::size_t k : v.blindspot_k) {
    const BlindspotInstance inst = build_blindspot_graph(k, v.blindspot_f, seed + k);
    const BlindspotReport r = verify_blindspot(inst, v.blindspot_draws, seed + k);
    const std::string label = "blindspot_k" + std::to_string(k);
    auto add = [&](const char* clause, double measured, double tol, bool pass) {
      rows.push_back({label, inst.graph.num_classes(), {}, 0.0, describe(gate), clause, measured, tol, pass});
    };
    add("max_gap", r.max_gap, 1e-9, r.max_gap < 1e-9);
    add("mowst_distinguishes", r.mowst_distinguishes ? 1.0 : 0.0, 1.0, r.mowst_distinguishes);
    add("matches_strong_elsewhere", r.matches_strong_elsewhere ? 1.0 : 0.0, 1.0, r.matches_strong_elsewhere);
    add("separator_differs", r.separator_differs ? 1.0 : 0.0, 1.0, r.separator_differs);
  }
  return rows;
}

std::string report_csv(std::span<const ReportRow> rows) {
  std::ostringstream s;
  s << "case,n,alpha,mu,spec,clause,measured,tolerance,pass\n";
  for (const auto& r : rows) {
    std::string alpha;
    for (std::size_t j = 0; j < r.alpha.size(); ++j) alpha += (j ? ";" : "") + num(r.alpha[j]);
    s << r.case_label << ',' << r.n << ',' << alpha << ',' << num(r.mu) << ',' << r.spec << ',' << r.clause << ','
      << num(r.measured) << ',' << num(r.tolerance) << ',' << (r.pass ? "true" : "false") << '\n';
  }
  return s.str();
}

int cmd_verify(const RunConfig& cfg, std::ostream& out) {
  const std::uint64_t seed = require_seed(cfg);
  const VerifySettings& v = cfg.verify;
  if (v.suite != "default" && v.suite != "theorem" && v.suite != "blindspot") {
    throw ConfigError("unknown suite '" + v.suite + "'");
  }
  const auto dir = prepare_out(cfg);
  std::vector<ReportRow> rows;
  if (v.suite == "blindspot") {
    append_rows(rows, blindspot_rows(v, seed), "blindspot", out);
  } else {
    append_rows(rows, theorem_suite(v.binary, v.ternary, seed), "theorem", out);
    append_rows(rows, step_tightness_suite(v.step_tightness, seed + 1), "step_tightness", out);
    append_rows(rows, two_level_tightness_suite(v.two_level_tightness, v.eta, seed + 2), "two_level_tightness",
                out);
    append_rows(rows, corollary_suite(v.corollary, seed + 3), "corollary", out);
    std::vector<ConfidenceSpec> specs = reference_specs();
    if (cfg.has_confidence) specs.push_back(cfg.train.confidence);
    std::vector<ReportRow> qc;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      auto part = quasiconvexity_suite(specs[i], v.quasiconvexity_trials, seed + 10 + i);
      qc.insert(qc.end(), part.begin(), part.end());
    }
    append_rows(rows, std::move(qc), "quasiconvexity", out);
    append_rows(rows, strict_quasiconvexity_suite(v.strict_pairs, seed + 4), "strict_quasiconvexity", out);
    append_rows(rows, loss_minimizer_suite(v.minimizer_problems, v.concavity_triples, seed + 5), "loss_minimizer",
                out);
  }
  write_file(dir / "theorem_report.csv", report_csv(rows));
  const bool ok = all_pass(rows);
  out << (ok ? "all clauses pass\n" : "verification FAILED\n");
  return ok ? kExitOk : kExitVerifyFailed;
}

int cmd_cost(const RunConfig& cfg, std::ostream& out) {
  const Graph graph = load_data(cfg);
  const std::size_t layers = cfg.cost.layers;
  const std::size_t f = cfg.cost.f.value_or(graph.feature_dim());
  if (layers < 1 || f < 1) throw ConfigError("cost needs layers >= 1 and f >= 1");
  const auto b = khop_sizes(graph, layers);
  std::ostringstream s;
  s << "hop,b_k\n";
  for (std::size_t k = 0; k < b.size(); ++k) s << k << ',' << num(b[k]) << '\n';
  s << "\narchitecture,f,layers,macs\n";
  for (ExpertKind kind : {ExpertKind::weak, ExpertKind::gcn, ExpertKind::gcn_skip}) {
    s << to_string(kind) << ',' << f << ',' << layers << ',' << num(cost_estimate(b, f, layers, kind)) << '\n';
  }
  out << s.str();
  return kExitOk;
}

}  // namespace

RunConfig parse_run_config(const std::string& document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what(), e.byte);
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(doc, {"seed", "out", "data", "train", "confidence", "verify", "cost", "checkpoint", "infer_mode"},
                 "config");
  RunConfig cfg;
  read(doc, "seed", cfg.seed, "config");
  std::optional<std::string> text;
  read(doc, "out", text, "config");
  if (text) cfg.out = *text;
  text.reset();
  read(doc, "checkpoint", text, "config");
  if (text) cfg.checkpoint = *text;
  read(doc, "infer_mode", cfg.infer_mode, "config");
  if (doc.contains("data")) parse_data(section(doc, "data"), cfg.data);
  if (doc.contains("train")) parse_train(section(doc, "train"), cfg.train);
  if (doc.contains("verify")) parse_verify(section(doc, "verify"), cfg.verify);
  if (doc.contains("cost")) {
    const json& s = section(doc, "cost");
    reject_unknown(s, {"f", "layers"}, "cost");
    read(s, "f", cfg.cost.f, "cost");
    read(s, "layers", cfg.cost.layers, "cost");
  }
  if (doc.contains("confidence")) {
    cfg.train.confidence = spec_from_json(section(doc, "confidence").dump());
    cfg.has_confidence = true;
  }
  return cfg;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mixture of weak and strong experts on graphs"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::string> config_path, out_dir;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--seed", seed, "Seed for generators, training and gate draws");
  app.add_option("--out", out_dir, "Output directory");

  std::optional<std::string> graph_path, kind, mode, pretrain, strong, checkpoint, suite;
  std::optional<std::size_t> k, f, n_per_group, rounds, max_epochs, patience, layers, binary, ternary;
  std::optional<double> noise, lr;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic graph");
  gen->add_option("--kind", kind, "specialization | blindspot");
  gen->add_option("--k", k, "Blindspot hop radius");
  gen->add_option("--f", f, "Feature width");
  gen->add_option("--n-per-group", n_per_group, "Nodes per population (specialization)");
  gen->add_option("--noise", noise, "Feature noise (specialization)");

  auto* trn = app.add_subcommand("train", "Train a mixture and write reports");
  trn->add_option("--graph", graph_path, "Graph document");
  trn->add_option("--mode", mode, "mowst_in_turn | mowst_joint | mowst_star");
  trn->add_option("--rounds", rounds, "In-turn rounds");
  trn->add_option("--max-epochs", max_epochs, "Epoch cap per turn");
  trn->add_option("--lr", lr, "Learning rate");
  trn->add_option("--patience", patience, "Early-stopping window");
  trn->add_option("--pretrain", pretrain, "none | weak | strong | both");
  trn->add_option("--strong", strong, "gcn | gcn_skip");

  auto* inf = app.add_subcommand("infer", "Predict with a trained checkpoint");
  inf->add_option("--graph", graph_path, "Graph document");
  inf->add_option("--checkpoint", checkpoint, "Checkpoint written by train");
  inf->add_option("--mode", mode, "stochastic | expected");

  auto* ver = app.add_subcommand("verify", "Run the verification suites");
  ver->add_option("--suite", suite, "default | theorem | blindspot");
  ver->add_option("--binary", binary, "Binary theorem problems");
  ver->add_option("--ternary", ternary, "Ternary theorem problems");

  auto* cst = app.add_subcommand("cost", "Print the multiply-accumulate table");
  cst->add_option("--graph", graph_path, "Graph document");
  cst->add_option("--f", f, "Feature width");
  cst->add_option("--layers", layers, "Layer count");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    RunConfig cfg = config_path ? parse_run_config(read_text(*config_path)) : RunConfig{};
    if (seed) cfg.seed = seed;
    if (out_dir) cfg.out = *out_dir;
    if (graph_path) {
      cfg.data.path = *graph_path;
      cfg.data.generator.reset();
    }
    if (kind) cfg.data.generator = *kind;
    if (k) cfg.data.k = *k;
    if (f) {
      cfg.data.f = *f;
      cfg.cost.f = *f;
    }
    if (n_per_group) cfg.data.n_per_group = *n_per_group;
    if (noise) cfg.data.noise = *noise;
    if (rounds) cfg.train.rounds = *rounds;
    if (max_epochs) cfg.train.max_epochs = *max_epochs;
    if (lr) cfg.train.learning_rate = *lr;
    if (patience) cfg.train.patience = *patience;
    if (pretrain) cfg.train.pretrain = pretrain_from_string(*pretrain);
    if (strong) cfg.train.strong_kind = expert_kind_from_string(*strong);
    if (checkpoint) cfg.checkpoint = *checkpoint;
    if (suite) cfg.verify.suite = *suite;
    if (binary) cfg.verify.binary = *binary;
    if (ternary) cfg.verify.ternary = *ternary;
    if (layers) cfg.cost.layers = *layers;

    if (gen->parsed()) {
      if (graph_path) throw ConfigError("gen does not read a graph");
      return cmd_gen(cfg, out);
    }
    if (trn->parsed()) {
      if (mode) cfg.train.mode = train_mode_from_string(*mode);
      return cmd_train(cfg, out);
    }
    if (inf->parsed()) {
      if (mode) cfg.infer_mode = *mode;
      return cmd_infer(cfg, out);
    }
    if (ver->parsed()) return cmd_verify(cfg, out);
    return cmd_cost(cfg, out);
  } catch (const TrainingError& e) {
    err << "training failed: " << e.what() << "\n";
    return kExitTrainingFailed;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    if (dynamic_cast<const ConfigError*>(&e)) {
      err << "usage: mowst {gen|train|infer|verify|cost} [--config PATH] [--seed N] [--out DIR] ...\n";
    }
    return kExitUsage;
  }
}

}  // namespace mowst
