#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mowst/confidence.hpp"
#include "mowst/experts.hpp"
#include "mowst/graph.hpp"
#include "mowst/mixture.hpp"

namespace mowst {

enum class TrainMode { mowst_in_turn, mowst_joint, mowst_star };
enum class Pretrain { none, weak, strong, both };

const char* to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& name);
const char* to_string(Pretrain which);
Pretrain pretrain_from_string(const std::string& name);

struct TrainConfig {
  TrainMode mode = TrainMode::mowst_in_turn;
  std::size_t rounds = 5;
  std::size_t max_epochs = 500;  // per turn
  double learning_rate = 0.5;
  // Per-expert overrides; zero freezes that expert.
  std::optional<double> weak_learning_rate;
  std::optional<double> strong_learning_rate;
  std::size_t patience = 20;
  std::uint64_t seed = 0;
  Pretrain pretrain = Pretrain::weak;
  std::size_t pretrain_epochs = 100;
  ConfidenceSpec confidence;
  ExpertKind strong_kind = ExpertKind::gcn;
  std::size_t hidden = 16;
  std::size_t weak_layers = 2;
  std::size_t strong_layers = 2;
  // Seed of the evaluation gate draws, independent of the training seed.
  std::uint64_t gate_seed = 1;
};

// Throws ConfigError on zero counts, nonpositive learning rate, etc.
void validate_config(const TrainConfig& config);

struct MowstModel {
  ExpertModel weak;
  ExpertModel strong;
  ConfidenceSpec confidence;
};

struct LossRecord {
  std::size_t round = 0;
  std::string turn;  // weak, strong, joint, star, pretrain_weak, pretrain_strong
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct AccuracyRecord {
  std::size_t round = 0;
  std::string split;
  double accuracy = 0.0;  // expected-mode
};

inline constexpr std::size_t kHistogramBins = 20;

struct HistogramSnapshot {
  std::size_t round = 0;
  std::vector<std::size_t> counts;  // kHistogramBins bins over [0, 1]
};

struct TrainReport {
  std::vector<LossRecord> losses;
  std::vector<AccuracyRecord> accuracy;
  std::vector<HistogramSnapshot> histograms;
};

struct TrainResult {
  MowstModel model;
  TrainReport report;
};

// Fresh experts (and learnable g) from seeds derived from config.seed.
MowstModel initialize_models(const TrainConfig& config, const Graph& graph);

TrainResult train(const TrainConfig& config, const Graph& graph);
TrainResult train(const TrainConfig& config, const Graph& graph, MowstModel initial);

struct PretrainResult {
  ExpertModel model;
  std::vector<double> train_losses;  // one per epoch, before that epoch's update
};

// Plain cross-entropy gradient descent on the train split. patience = 0
// disables early stopping on validation loss.
PretrainResult pretrain_expert(const ExpertModel& expert, const Graph& graph, std::size_t epochs,
                               double learning_rate, std::size_t patience = 0);

MixtureOutput mixture_forward(const MowstModel& model, const Graph& graph);

std::vector<std::size_t> confidence_histogram(std::span<const double> confidence,
                                              std::span<const std::size_t> nodes);

struct Evaluation {
  double expected_accuracy = 0.0;
  double stochastic_accuracy = 0.0;
  double mean_confidence = 0.0;
  std::vector<std::size_t> histogram;
};

Evaluation evaluate(const MowstModel& model, const Graph& graph, SplitName split, std::uint64_t gate_seed);

double expert_accuracy(const ExpertModel& expert, const Graph& graph, SplitName split);

// JSON checkpoint holding both experts and the confidence spec.
std::string mowst_to_json(const MowstModel& model);
MowstModel mowst_from_json(const std::string& document);

}  // namespace mowst
