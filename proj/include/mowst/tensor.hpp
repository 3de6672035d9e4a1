#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mowst/kernels.hpp"

namespace mowst {

// Lower clamp applied to every logarithm argument (cross-entropy, negative
// entropy, alpha-loss). Oracles use the same floor.
inline constexpr double kLogFloor = 1e-12;

// Dense row-major array of doubles with an optional gradient slot. All
// primitives work on rank-2 tensors; vectors are 1 x n or n x 1 and scalars
// are 1 x 1.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(std::size_t rows, std::size_t cols);
  static Tensor filled(std::size_t rows, std::size_t cols, double value);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor scalar(double value);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t size() const noexcept { return values_.size(); }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> row(std::size_t r) const;

  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double item() const;

  bool requires_grad() const noexcept { return requires_grad_; }
  void set_requires_grad(bool flag) noexcept { requires_grad_ = flag; }

  const std::optional<std::vector<double>>& grad() const noexcept { return grad_; }
  void set_grad(std::vector<double> grad);
  void clear_grad() noexcept { grad_.reset(); }

  bool all_finite() const noexcept;
  std::string shape_string() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
  bool requires_grad_ = false;
  std::optional<std::vector<double>> grad_;
};

class Tape;

// Handle to a value recorded on a Tape. A Var is only meaningful for the tape
// (and tape generation) that produced it.
struct Var {
  const Tape* tape = nullptr;
  std::uint64_t generation = 0;
  std::size_t id = 0;
};

enum class OpKind {
  leaf,
  matmul,
  add,
  add_row,  // m x n plus a broadcast 1 x n row (bias)
  sub,
  mul,
  scale,
  add_scalar,
  relu,
  sigmoid,
  softmax_rows,
  log_prob,
  sum,
  mean,
  row_sum,
  min_scalar,
  piecewise,  // elementwise piecewise-constant map; zero derivative
  propagate,  // normalized-adjacency aggregation
};

const char* op_name(OpKind op);

// Records primitive applications in topological order and runs the reverse
// pass. Confined to one thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value);
  Var constant(Tensor value);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var add_row(Var a, Var row);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double factor);
  Var add_scalar(Var a, double offset);
  Var relu(Var a);
  Var sigmoid(Var a);
  Var softmax_rows(Var a);
  // log of a probability, argument clamped to [kLogFloor, 1].
  Var log_prob(Var a);
  Var sum(Var a);
  Var mean(Var a);
  Var row_sum(Var a);
  Var min_scalar(Var a, double cap);
  Var piecewise(Var a, std::function<double(double)> map);
  Var propagate(std::shared_ptr<const kernels::NormalizedAdjacency> adj, Var a);

  const Tensor& value(Var v) const;
  // Gradient of the last backward() target with respect to v; zeros if v
  // was not reached.
  std::vector<double> gradient(Var v) const;

  void backward(Var scalar_output);

  // Recomputes every non-leaf entry from its recorded inputs and reports
  // whether all outputs are bit-identical to the recorded ones.
  bool replay_matches() const;

  // Drops all entries. Vars issued before the call become detached.
  void clear();

  std::size_t size() const noexcept { return entries_.size(); }
  OpKind op(Var v) const;
  std::vector<std::size_t> inputs(Var v) const;

 private:
  struct Entry {
    OpKind op = OpKind::leaf;
    std::vector<std::size_t> inputs;
    double scalar = 0.0;
    std::function<double(double)> map;
    std::shared_ptr<const kernels::NormalizedAdjacency> adj;
    Tensor value;
    bool needs_grad = false;
    std::vector<double> grad;
  };

  std::size_t check(Var v) const;
  Var push(Entry entry);
  Tensor compute(const Entry& entry) const;
  void accumulate(std::size_t id, std::span<const double> delta);

  std::vector<Entry> entries_;
  std::uint64_t generation_ = 1;
};

// An expression is a function that records a computation on the tape from
// leaf Vars and returns the output Var.
using Expr = std::function<Var(Tape&, std::span<const Var>)>;

// Evaluates expr on the given inputs. Inputs with requires_grad become
// differentiable leaves on a fresh tape.
Tensor evaluate(const Expr& expr, std::span<const Tensor> inputs);

// Evaluates a scalar expression, runs backward, and stores the gradient in
// every input that requires it.
Tensor evaluate_with_gradient(const Expr& expr, std::span<Tensor> inputs);

// Largest |analytic - central difference| / max(1, |analytic|) over every
// coordinate of every input. All inputs are treated as differentiable.
double check_gradient(const Expr& expr, std::span<const Tensor> inputs, double h);

}  // namespace mowst
