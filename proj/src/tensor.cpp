#include "mowst/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <utility>

#include "mowst/error.hpp"

namespace mowst {

// ---------------------------------------------------------------- Tensor

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values, bool requires_grad)
    : shape_(std::move(shape)), values_(std::move(values)), requires_grad_(requires_grad) {
  const std::size_t expected =
      std::accumulate(shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>());
  if (expected != values_.size()) {
    throw ShapeError("tensor shape " + shape_string() + " needs " + std::to_string(expected) +
                     " values, got " + std::to_string(values_.size()));
  }
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) { return filled(rows, cols, 0.0); }

Tensor Tensor::filled(std::size_t rows, std::size_t cols, double value) {
  return Tensor({rows, cols}, std::vector<double>(rows * cols, value));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::scalar(double value) { return Tensor({1, 1}, {value}); }

std::size_t Tensor::rows() const {
  if (shape_.size() != 2) throw ShapeError("expected a rank-2 tensor, got shape " + shape_string());
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.size() != 2) throw ShapeError("expected a rank-2 tensor, got shape " + shape_string());
  return shape_[1];
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const double>(values_).subspan(r * c, c);
}

double Tensor::item() const {
  if (values_.size() != 1) throw ContractError("item() on tensor of shape " + shape_string());
  return values_[0];
}

void Tensor::set_grad(std::vector<double> grad) {
  if (grad.size() != values_.size()) {
    throw ShapeError("gradient of size " + std::to_string(grad.size()) + " for tensor " +
                     shape_string());
  }
  grad_ = std::move(grad);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------- Tape

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::add_row: return "add_row";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::add_scalar: return "add_scalar";
    case OpKind::relu: return "relu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::softmax_rows: return "softmax_rows";
    case OpKind::log_prob: return "log_prob";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::row_sum: return "row_sum";
    case OpKind::min_scalar: return "min_scalar";
    case OpKind::piecewise: return "piecewise";
    case OpKind::propagate: return "propagate";
  }
  return "?";
}

namespace {

[[noreturn]] void shape_mismatch(OpKind op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op_name(op)) + ": shape " + a.shape_string() +
                   " incompatible with " + b.shape_string());
}

void require_matrix(OpKind op, const Tensor& t) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op_name(op)) + ": expected rank-2 operand, got " +
                     t.shape_string());
  }
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::size_t Tape::check(Var v) const {
  if (v.tape != this || v.generation != generation_ || v.id >= entries_.size()) {
    throw StateError("variable is detached from this tape");
  }
  return v.id;
}

Var Tape::push(Entry entry) {
  entry.value = compute(entry);
  entries_.push_back(std::move(entry));
  return Var{this, generation_, entries_.size() - 1};
}

Var Tape::leaf(Tensor value) {
  require_matrix(OpKind::leaf, value);
  if (!value.all_finite()) throw DomainError("non-finite value in input tensor " + value.shape_string());
  Entry e;
  e.op = OpKind::leaf;
  e.needs_grad = value.requires_grad();
  e.value = std::move(value);
  e.value.clear_grad();
  entries_.push_back(std::move(e));
  return Var{this, generation_, entries_.size() - 1};
}

Var Tape::constant(Tensor value) {
  value.set_requires_grad(false);
  return leaf(std::move(value));
}

#define MOWST_UNARY(name, kind)                    \
  Var Tape::name(Var a) {                          \
    Entry e;                                       \
    e.op = OpKind::kind;                           \
    e.inputs = {check(a)};                         \
    e.needs_grad = entries_[e.inputs[0]].needs_grad; \
    return push(std::move(e));                     \
  }

#define MOWST_BINARY(name, kind)                                                         \
  Var Tape::name(Var a, Var b) {                                                         \
    Entry e;                                                                             \
    e.op = OpKind::kind;                                                                 \
    e.inputs = {check(a), check(b)};                                                     \
    e.needs_grad = entries_[e.inputs[0]].needs_grad || entries_[e.inputs[1]].needs_grad; \
    return push(std::move(e));                                                           \
  }

MOWST_BINARY(matmul, matmul)
MOWST_BINARY(add, add)
MOWST_BINARY(add_row, add_row)
MOWST_BINARY(sub, sub)
MOWST_BINARY(mul, mul)
MOWST_UNARY(relu, relu)
MOWST_UNARY(sigmoid, sigmoid)
MOWST_UNARY(softmax_rows, softmax_rows)
MOWST_UNARY(log_prob, log_prob)
MOWST_UNARY(sum, sum)
MOWST_UNARY(mean, mean)
MOWST_UNARY(row_sum, row_sum)

#undef MOWST_UNARY
#undef MOWST_BINARY

Var Tape::scale(Var a, double factor) {
  Entry e;
  e.op = OpKind::scale;
  e.inputs = {check(a)};
  e.scalar = factor;
  e.needs_grad = entries_[e.inputs[0]].needs_grad;
  return push(std::move(e));
}

Var Tape::add_scalar(Var a, double offset) {
  Entry e;
  e.op = OpKind::add_scalar;
  e.inputs = {check(a)};
  e.scalar = offset;
  e.needs_grad = entries_[e.inputs[0]].needs_grad;
  return push(std::move(e));
}

Var Tape::min_scalar(Var a, double cap) {
  Entry e;
  e.op = OpKind::min_scalar;
  e.inputs = {check(a)};
  e.scalar = cap;
  e.needs_grad = entries_[e.inputs[0]].needs_grad;
  return push(std::move(e));
}

Var Tape::piecewise(Var a, std::function<double(double)> map) {
  Entry e;
  e.op = OpKind::piecewise;
  e.inputs = {check(a)};
  e.map = std::move(map);
  e.needs_grad = entries_[e.inputs[0]].needs_grad;
  return push(std::move(e));
}

Var Tape::propagate(std::shared_ptr<const kernels::NormalizedAdjacency> adj, Var a) {
  Entry e;
  e.op = OpKind::propagate;
  e.inputs = {check(a)};
  e.adj = std::move(adj);
  e.needs_grad = entries_[e.inputs[0]].needs_grad;
  return push(std::move(e));
}

Tensor Tape::compute(const Entry& entry) const {
  const OpKind op = entry.op;
  if (op == OpKind::leaf) return entry.value;
  const Tensor& a = entries_[entry.inputs[0]].value;
  require_matrix(op, a);
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  auto av = a.values();

  auto same_shape = [&](const Tensor& b) {
    if (a.shape() != b.shape()) shape_mismatch(op, a, b);
  };
  auto elementwise = [&](auto fn) {
    Tensor out = Tensor::zeros(m, n);
    auto ov = out.values();
    for (std::size_t i = 0; i < av.size(); ++i) ov[i] = fn(av[i]);
    return out;
  };

  switch (op) {
    case OpKind::matmul: {
      const Tensor& b = entries_[entry.inputs[1]].value;
      require_matrix(op, b);
      if (n != b.rows()) shape_mismatch(op, a, b);
      Tensor out = Tensor::zeros(m, b.cols());
      kernels::matmul(av, b.values(), out.values(), m, n, b.cols());
      return out;
    }
    case OpKind::add:
    case OpKind::sub:
    case OpKind::mul: {
      const Tensor& b = entries_[entry.inputs[1]].value;
      same_shape(b);
      Tensor out = Tensor::zeros(m, n);
      auto ov = out.values();
      auto bv = b.values();
      for (std::size_t i = 0; i < av.size(); ++i) {
        ov[i] = op == OpKind::add ? av[i] + bv[i] : op == OpKind::sub ? av[i] - bv[i] : av[i] * bv[i];
      }
      return out;
    }
    case OpKind::add_row: {
      const Tensor& b = entries_[entry.inputs[1]].value;
      require_matrix(op, b);
      if (b.rows() != 1 || b.cols() != n) shape_mismatch(op, a, b);
      Tensor out = Tensor::zeros(m, n);
      auto ov = out.values();
      auto bv = b.values();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ov[i * n + j] = av[i * n + j] + bv[j];
      return out;
    }
    case OpKind::scale: {
      const double f = entry.scalar;
      return elementwise([f](double x) { return f * x; });
    }
    case OpKind::add_scalar: {
      const double s = entry.scalar;
      return elementwise([s](double x) { return x + s; });
    }
    case OpKind::relu:
      return elementwise([](double x) { return x > 0.0 ? x : 0.0; });
    case OpKind::sigmoid:
      return elementwise(stable_sigmoid);
    case OpKind::softmax_rows: {
      Tensor out = Tensor::zeros(m, n);
      auto ov = out.values();
      for (std::size_t i = 0; i < m; ++i) {
        const double* x = av.data() + i * n;
        double* y = ov.data() + i * n;
        const double mx = *std::max_element(x, x + n);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          y[j] = std::exp(x[j] - mx);
          z += y[j];
        }
        for (std::size_t j = 0; j < n; ++j) y[j] /= z;
      }
      return out;
    }
    case OpKind::log_prob:
      return elementwise([](double x) {
        if (!(x >= 0.0 && x <= 1.0 + 1e-9)) {
          throw DomainError("log_prob: argument " + std::to_string(x) + " outside [0, 1]");
        }
        return std::log(std::clamp(x, kLogFloor, 1.0));
      });
    case OpKind::sum: {
      double s = 0.0;
      for (double x : av) s += x;
      return Tensor::scalar(s);
    }
    case OpKind::mean: {
      double s = 0.0;
      for (double x : av) s += x;
      return Tensor::scalar(s / static_cast<double>(av.size()));
    }
    case OpKind::row_sum: {
      Tensor out = Tensor::zeros(m, 1);
      for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += av[i * n + j];
        out(i, 0) = s;
      }
      return out;
    }
    case OpKind::min_scalar: {
      const double cap = entry.scalar;
      return elementwise([cap](double x) { return std::min(x, cap); });
    }
    case OpKind::piecewise:
      return elementwise(entry.map);
    case OpKind::propagate: {
      if (m != entry.adj->num_nodes) {
        throw ShapeError("propagate: operand " + a.shape_string() + " does not match graph with " +
                         std::to_string(entry.adj->num_nodes) + " nodes");
      }
      Tensor out = Tensor::zeros(m, n);
      kernels::propagate(*entry.adj, av, out.values(), n);
      return out;
    }
    case OpKind::leaf:
      break;
  }
  return entry.value;
}

const Tensor& Tape::value(Var v) const { return entries_[check(v)].value; }

std::vector<double> Tape::gradient(Var v) const {
  const Entry& e = entries_[check(v)];
  if (e.grad.empty()) return std::vector<double>(e.value.size(), 0.0);
  return e.grad;
}

OpKind Tape::op(Var v) const { return entries_[check(v)].op; }

std::vector<std::size_t> Tape::inputs(Var v) const { return entries_[check(v)].inputs; }

void Tape::accumulate(std::size_t id, std::span<const double> delta) {
  Entry& e = entries_[id];
  if (!e.needs_grad) return;
  if (e.grad.empty()) e.grad.assign(e.value.size(), 0.0);
  for (std::size_t i = 0; i < delta.size(); ++i) e.grad[i] += delta[i];
}

void Tape::backward(Var scalar_output) {
  const std::size_t out = check(scalar_output);
  if (entries_[out].value.size() != 1) {
    throw ContractError("backward() needs a scalar output, got shape " +
                        entries_[out].value.shape_string());
  }
  for (auto& e : entries_) e.grad.clear();
  accumulate(out, std::vector<double>{1.0});

  for (std::size_t idx = out + 1; idx-- > 0;) {
    Entry& e = entries_[idx];
    if (e.op == OpKind::leaf || e.grad.empty()) continue;
    const std::vector<double>& g = e.grad;
    const Tensor& a = entries_[e.inputs[0]].value;
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    auto av = a.values();
    auto yv = e.value.values();
    std::vector<double> da;

    switch (e.op) {
      case OpKind::matmul: {
        const Tensor& b = entries_[e.inputs[1]].value;
        const std::size_t p = b.cols();
        if (entries_[e.inputs[0]].needs_grad) {
          da.assign(m * n, 0.0);
          kernels::matmul_bt_accumulate(g, b.values(), da, m, p, n);
          accumulate(e.inputs[0], da);
        }
        if (entries_[e.inputs[1]].needs_grad) {
          std::vector<double> db(n * p, 0.0);
          kernels::matmul_at_accumulate(av, g, db, m, n, p);
          accumulate(e.inputs[1], db);
        }
        continue;
      }
      case OpKind::add:
        accumulate(e.inputs[0], g);
        accumulate(e.inputs[1], g);
        continue;
      case OpKind::sub: {
        accumulate(e.inputs[0], g);
        std::vector<double> neg(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) neg[i] = -g[i];
        accumulate(e.inputs[1], neg);
        continue;
      }
      case OpKind::mul: {
        auto bv = entries_[e.inputs[1]].value.values();
        std::vector<double> db(g.size());
        da.resize(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
          da[i] = g[i] * bv[i];
          db[i] = g[i] * av[i];
        }
        accumulate(e.inputs[0], da);
        accumulate(e.inputs[1], db);
        continue;
      }
      case OpKind::add_row: {
        accumulate(e.inputs[0], g);
        std::vector<double> db(n, 0.0);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) db[j] += g[i * n + j];
        accumulate(e.inputs[1], db);
        continue;
      }
      case OpKind::scale:
        da.resize(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) da[i] = e.scalar * g[i];
        break;
      case OpKind::add_scalar:
        da = g;
        break;
      case OpKind::relu:
        da.resize(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) da[i] = av[i] > 0.0 ? g[i] : 0.0;
        break;
      case OpKind::sigmoid:
        da.resize(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) da[i] = g[i] * yv[i] * (1.0 - yv[i]);
        break;
      case OpKind::softmax_rows:
        da.resize(g.size());
        for (std::size_t i = 0; i < m; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * yv[i * n + j];
          for (std::size_t j = 0; j < n; ++j) da[i * n + j] = yv[i * n + j] * (g[i * n + j] - dot);
        }
        break;
      case OpKind::log_prob:
        da.resize(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
          da[i] = (av[i] >= kLogFloor && av[i] <= 1.0) ? g[i] / av[i] : 0.0;
        }
        break;
      case OpKind::sum:
        da.assign(av.size(), g[0]);
        break;
      case OpKind::mean:
        da.assign(av.size(), g[0] / static_cast<double>(av.size()));
        break;
      case OpKind::row_sum:
        da.resize(av.size());
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) da[i * n + j] = g[i];
        break;
      case OpKind::min_scalar:
        da.resize(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) da[i] = av[i] < e.scalar ? g[i] : 0.0;
        break;
      case OpKind::piecewise:
        da.assign(g.size(), 0.0);
        break;
      case OpKind::propagate:
        da.assign(g.size(), 0.0);
        kernels::propagate(*e.adj, g, da, n);
        break;
      case OpKind::leaf:
        continue;
    }
    accumulate(e.inputs[0], da);
  }

  for (auto& e : entries_) {
    if (e.op == OpKind::leaf && e.value.requires_grad()) {
      e.value.set_grad(e.grad.empty() ? std::vector<double>(e.value.size(), 0.0) : e.grad);
    }
  }
}

bool Tape::replay_matches() const {
  for (const Entry& e : entries_) {
    if (e.op == OpKind::leaf) continue;
    if (!(compute(e) == e.value)) return false;
  }
  return true;
}

void Tape::clear() {
  entries_.clear();
  ++generation_;
}

// ---------------------------------------------------------------- drivers

Tensor evaluate(const Expr& expr, std::span<const Tensor> inputs) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.push_back(tape.leaf(t));
  Tensor out = tape.value(expr(tape, vars));
  out.clear_grad();
  out.set_requires_grad(false);
  return out;
}

Tensor evaluate_with_gradient(const Expr& expr, std::span<Tensor> inputs) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.push_back(tape.leaf(t));
  const Var out = expr(tape, vars);
  tape.backward(out);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].requires_grad()) inputs[i].set_grad(tape.gradient(vars[i]));
  }
  Tensor result = tape.value(out);
  result.clear_grad();
  return result;
}

double check_gradient(const Expr& expr, std::span<const Tensor> inputs, double h) {
  if (!(h > 0.0 && h <= 1e-3)) throw ContractError("finite-difference step must lie in (0, 1e-3]");
  std::vector<Tensor> work(inputs.begin(), inputs.end());
  for (Tensor& t : work) t.set_requires_grad(true);
  evaluate_with_gradient(expr, work);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(work.size());
  for (Tensor& t : work) {
    analytic.push_back(*t.grad());
    t.clear_grad();
    t.set_requires_grad(false);
  }

  double worst = 0.0;
  for (std::size_t i = 0; i < work.size(); ++i) {
    for (std::size_t j = 0; j < work[i].size(); ++j) {
      const double saved = work[i].values()[j];
      work[i].values()[j] = saved + h;
      const double plus = evaluate(expr, work).item();
      work[i].values()[j] = saved - h;
      const double minus = evaluate(expr, work).item();
      work[i].values()[j] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double a = analytic[i][j];
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
    }
  }
  return worst;
}

}  // namespace mowst
