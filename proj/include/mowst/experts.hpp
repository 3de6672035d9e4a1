#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mowst/graph.hpp"
#include "mowst/tensor.hpp"

namespace mowst {

struct ExpertLayer {
  Tensor weight;       // in x out
  Tensor bias;         // 1 x out
  Tensor self_weight;  // in x out, gcn_skip only (empty otherwise)
};

// Weak (perceptron stack) or strong (graph convolution) classifier. ReLU
// between layers, row-wise softmax after the last.
struct ExpertModel {
  ExpertKind kind = ExpertKind::weak;
  std::vector<ExpertLayer> layers;

  // f_0, f_1, ..., f_L
  std::vector<std::size_t> dims() const;
  std::size_t input_dim() const { return dims().front(); }
  std::size_t output_dim() const { return dims().back(); }

  // Parameter tensors in a fixed order: per layer weight, bias, self_weight.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;

  friend bool operator==(const ExpertModel& a, const ExpertModel& b);
};

// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
ExpertModel init_expert(ExpertKind kind, std::span<const std::size_t> dims, std::uint64_t seed);
ExpertModel zero_expert(ExpertKind kind, std::span<const std::size_t> dims);

// Throws ShapeError if consecutive layers do not chain or a skip weight is
// missing/extra.
void validate_expert(const ExpertModel& model);

// Records the forward pass. `params` are the model's parameters as tape
// variables, in parameters() order. `adj` may be null for the weak kind.
// Returns pre-softmax logits when `logits_only` is set.
Var record_forward(Tape& tape, const ExpertModel& model, std::span<const Var> params, Var features,
                   const std::shared_ptr<const kernels::NormalizedAdjacency>& adj,
                   bool logits_only = false);

// Binds the model's parameters as tape leaves (differentiable iff trainable).
std::vector<Var> bind_parameters(Tape& tape, const ExpertModel& model, bool trainable);

Tensor weak_forward(const ExpertModel& model, const Tensor& features);
Tensor gcn_forward(const ExpertModel& model, const Graph& graph, const Tensor& features);
// Dispatches on kind, using the graph's own features.
Tensor expert_forward(const ExpertModel& model, const Graph& graph);
// Last-layer pre-softmax output of a convolution stack.
Tensor gcn_logits(const ExpertModel& model, const Graph& graph, const Tensor& features);

std::string checkpoint_to_json(const ExpertModel& model);
ExpertModel expert_from_json(const std::string& document);

}  // namespace mowst
