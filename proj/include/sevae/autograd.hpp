#pragma once

// Dynamic-tape reverse-mode automatic differentiation.
//
// A Tape records every op in insertion order; inputs always precede their
// consumers, so the graph is acyclic by construction and backward() is a single
// reverse sweep. A tape is rebuilt for every forward pass. Parameters live
// outside the tape and receive gradients additively, once per use.

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sevae/tensor.hpp"

namespace sevae {

class Parameter {
 public:
  Parameter(std::string name, Tensor value, bool trainable = true);

  const std::string& name() const { return name_; }
  Tensor& value() { return value_; }
  const Tensor& value() const { return value_; }
  Tensor& grad() { return grad_; }
  const Tensor& grad() const { return grad_; }
  bool trainable() const { return trainable_; }
  void zero_grad() { grad_.fill(0.0); }

 private:
  std::string name_;
  Tensor value_;
  Tensor grad_;
  bool trainable_;
};

class Tape;

// Handle to a node of a Tape. Cheap to copy; only valid while its tape lives
// and has not been cleared.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  double item() const { return value().item(); }
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  Tape* tape() const { return tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

class Tape {
 public:
  enum class Mode { train, inference };
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad, const Tensor& out_value)>;

  explicit Tape(Mode mode = Mode::train) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Mode mode() const { return mode_; }
  bool training() const { return mode_ == Mode::train; }

  Var constant(Tensor value);
  // Gradients reach p.grad() only in train mode and only if p is trainable.
  Var param(Parameter& p);
  Var param(const Parameter& p);

  const Tensor& value(Var v) const;
  const Tensor& value(std::uint32_t id) const;
  bool needs_grad(Var v) const { return needs_grad(v.id()); }
  bool needs_grad(std::uint32_t id) const { return nodes_[id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }
  const char* op_name(Var v) const { return nodes_[v.id()].op; }

  // Populates gradients of every parameter reachable from `loss`.
  void backward(Var loss);
  void clear();

  // Op-author interface. `inputs` decides whether the new node needs a
  // gradient; `fn` is dropped when none of them does. The value must be
  // finite or a NumericalError naming `op` is thrown.
  Var record(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(const char* op, Tensor value, std::span<const Var> inputs, BackwardFn fn);
  // Gradient buffer of node `id`, allocated as zeros on first access.
  Tensor& grad(std::uint32_t id);
  Tensor& grad(Var v) { return grad(v.id()); }

 private:
  struct Node {
    const char* op = "";
    Tensor owned;
    const Tensor* ref = nullptr;
    Tensor grad;
    bool grad_allocated = false;
    Tensor* grad_ref = nullptr;
    bool needs_grad = false;
    BackwardFn backward;
  };

  Var push(Node node);
  void check_var(Var v, const char* what) const;

  Mode mode_;
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Ops. All of them validate shapes and throw UsageError on mismatch.
namespace ag {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
// m is (r x c) or a length-c vector; row has c entries and is added to every row.
Var add_row(Var m, Var row);

Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
// Gradient is zero where the input lies outside [lo, hi].
Var clamp(Var a, double lo, double hi);

// (m x k)(k x n)
Var matmul(Var a, Var b);
// (m x k)(n x k)^T
Var matmul_nt(Var a, Var b);
// (m x n) times length-n vector
Var matvec(Var w, Var x);
Var affine(Var w, Var x, Var b);
// X W^T + b for every row of X
Var linear_rows(Var x, Var w, Var b);

// Flattens and concatenates rank 0/1 inputs into one vector.
Var concat(std::span<const Var> parts);
Var concat(std::initializer_list<Var> parts);
// Column-wise concatenation of matrices with equal row counts.
Var hconcat(std::span<const Var> parts);
// Row-wise stacking; vectors count as single rows.
Var vstack(std::span<const Var> parts);
Var vstack(std::initializer_list<Var> parts);

Var slice(Var x, std::size_t start, std::size_t len);
Var cols(Var x, std::size_t start, std::size_t len);
Var row(Var x, std::size_t r);
Var reshape(Var x, Shape shape);
Var pick(Var x, std::size_t index);

Var sum(Var x);
Var mean(Var x);
Var max(Var x);
// Column-wise reductions over the rows of a matrix, producing a vector.
Var mean_rows(Var x);
Var max_rows(Var x);

// Gathers rows of `table` into a (ids.size() x d) matrix.
Var embedding(Var table, std::span<const int> ids);

Var softmax(Var x);
Var log_softmax(Var x);
Var softmax_rows(Var x);
Var logsumexp(Var x);
// -log softmax(logits)[target]
Var cross_entropy(Var logits, std::size_t target);
// sum over rows t of -log softmax(logits[t])[targets[t]]
Var nll_rows(Var logits, std::span<const int> targets);

Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);

// Inverted dropout with keep-probability 1-p. Identity when p == 0 or the
// tape is not training.
Var dropout(Var x, double p, std::mt19937_64& rng);

}  // namespace ag

// Plain-value numerics shared by models and tests.
namespace num {

// Max-shifted log(sum(exp(x))). Throws on empty or non-finite input.
double logsumexp(std::span<const double> x);
std::vector<double> softmax(std::span<const double> x);
std::vector<double> log_softmax(std::span<const double> x);
std::size_t argmax(std::span<const double> x);

}  // namespace num

}  // namespace sevae
