#include "sevae/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sevae/error.hpp"
#include "sevae/kernels.hpp"

namespace sevae {

Parameter::Parameter(std::string name, Tensor value, bool trainable)
    : name_(std::move(name)), value_(std::move(value)), grad_(value_.shape(), 0.0), trainable_(trainable) {}

const Tensor& Var::value() const {
  if (!tape_) throw UsageError("use of an empty Var");
  return tape_->value(*this);
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::push(Node node) {
  if (backward_done_) throw UsageError("cannot record ops on a tape after backward(); clear() it first");
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

void Tape::check_var(Var v, const char* what) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) {
    throw UsageError(std::string(what) + ": Var does not belong to this tape");
  }
}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericalError("non-finite value passed to constant");
  Node n;
  n.op = "constant";
  n.owned = std::move(value);
  return push(std::move(n));
}

Var Tape::param(Parameter& p) {
  Node n;
  n.op = "param";
  n.ref = &p.value();
  if (training() && p.trainable()) {
    n.needs_grad = true;
    n.grad_ref = &p.grad();
  }
  return push(std::move(n));
}

Var Tape::param(const Parameter& p) {
  Node n;
  n.op = "param";
  n.ref = &p.value();
  return push(std::move(n));
}

const Tensor& Tape::value(Var v) const {
  check_var(v, "value");
  return value(v.id_);
}

const Tensor& Tape::value(std::uint32_t id) const {
  const Node& n = nodes_[id];
  return n.ref ? *n.ref : n.owned;
}

Tensor& Tape::grad(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad_ref) return *n.grad_ref;
  if (!n.grad_allocated) {
    n.grad = Tensor(value(id).shape(), 0.0);
    n.grad_allocated = true;
  }
  return n.grad;
}

Var Tape::record(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Tape::record(const char* op, Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  if (!value.all_finite()) throw NumericalError(std::string("non-finite value produced by op '") + op + "'");
  Node n;
  n.op = op;
  n.owned = std::move(value);
  if (training()) {
    for (Var v : inputs) {
      check_var(v, op);
      if (nodes_[v.id_].needs_grad) n.needs_grad = true;
    }
  }
  if (n.needs_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

void Tape::backward(Var loss) {
  if (nodes_.empty() || loss.tape_ != this || loss.id_ >= nodes_.size()) {
    throw NumericalError("backward before forward: loss is not a node of this tape");
  }
  if (backward_done_) throw NumericalError("backward already ran on this tape");
  if (value(loss.id_).size() != 1) {
    throw NumericalError("backward requires a scalar loss, got shape " + shape_string(value(loss.id_).shape()));
  }
  backward_done_ = true;
  if (!nodes_[loss.id_].needs_grad) return;
  grad(loss.id_)[0] += 1.0;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || !n.backward || !n.grad_allocated) continue;
    n.backward(*this, n.grad, value(static_cast<std::uint32_t>(i)));
  }
}

void Tape::clear() {
  nodes_.clear();
  backward_done_ = false;
}

// ---------------------------------------------------------------------------
// Ops

namespace ag {
namespace {

Tape& same_tape(Var a, Var b, const char* op) {
  if (!a.valid() || a.tape() != b.tape()) throw UsageError(std::string(op) + ": operands from different tapes");
  return *a.tape();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw UsageError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw UsageError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(t.shape()));
  }
}

bool is_vector_like(const Tensor& t) { return t.rank() <= 1; }

void acc(Tensor& dst, const Tensor& src, double a = 1.0) { kernels::axpy(a, src.ptr(), dst.ptr(), src.size()); }

template <typename F, typename D>
Var unary(Var a, const char* op, F forward, D derivative) {
  Tape& t = *a.tape();
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = forward(x[i]);
  const std::uint32_t ia = a.id();
  return t.record(op, std::move(y), {a}, [ia, derivative](Tape& tp, const Tensor& g, const Tensor& out) {
    if (!tp.needs_grad(ia)) return;
    const Tensor& xin = tp.value(ia);
    Tensor& ga = tp.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * derivative(xin[i], out[i]);
  });
}

}  // namespace

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Tensor y = a.value();
  acc(y, b.value());
  const auto ia = a.id(), ib = b.id();
  return t.record("add", std::move(y), {a, b}, [ia, ib](Tape& tp, const Tensor& g, const Tensor&) {
    if (tp.needs_grad(ia)) acc(tp.grad(ia), g);
    if (tp.needs_grad(ib)) acc(tp.grad(ib), g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  Tensor y = a.value();
  acc(y, b.value(), -1.0);
  const auto ia = a.id(), ib = b.id();
  return t.record("sub", std::move(y), {a, b}, [ia, ib](Tape& tp, const Tensor& g, const Tensor&) {
    if (tp.needs_grad(ia)) acc(tp.grad(ia), g);
    if (tp.needs_grad(ib)) acc(tp.grad(ib), g, -1.0);
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b, "mul");
  require_same_shape(a.value(), b.value(), "mul");
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * z[i];
  const auto ia = a.id(), ib = b.id();
  return t.record("mul", std::move(y), {a, b}, [ia, ib](Tape& tp, const Tensor& g, const Tensor&) {
    const Tensor& xa = tp.value(ia);
    const Tensor& xb = tp.value(ib);
    if (tp.needs_grad(ia)) {
      Tensor& ga = tp.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * xb[i];
    }
    if (tp.needs_grad(ib)) {
      Tensor& gb = tp.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * xa[i];
    }
  });
}

Var scale(Var a, double s) {
  Tensor y = a.value();
  for (double& v : y.data()) v *= s;
  const auto ia = a.id();
  return a.tape()->record("scale", std::move(y), {a}, [ia, s](Tape& tp, const Tensor& g, const Tensor&) {
    acc(tp.grad(ia), g, s);
  });
}

Var add_scalar(Var a, double s) {
  Tensor y = a.value();
  for (double& v : y.data()) v += s;
  const auto ia = a.id();
  return a.tape()->record("add_scalar", std::move(y), {a}, [ia](Tape& tp, const Tensor& g, const Tensor&) {
    acc(tp.grad(ia), g);
  });
}

Var add_row(Var m, Var r) {
  Tape& t = same_tape(m, r, "add_row");
  const Tensor& x = m.value();
  const Tensor& b = r.value();
  if (!is_vector_like(b) || b.size() != x.cols() || x.rank() > 2) {
    throw UsageError("add_row: row of shape " + shape_string(b.shape()) + " does not fit " + shape_string(x.shape()));
  }
  Tensor y = x;
  for (std::size_t i = 0; i < y.rows(); ++i) kernels::axpy(1.0, b.ptr(), y.row(i), b.size());
  const auto im = m.id(), ir = r.id();
  return t.record("add_row", std::move(y), {m, r}, [im, ir](Tape& tp, const Tensor& g, const Tensor&) {
    if (tp.needs_grad(im)) acc(tp.grad(im), g);
    if (tp.needs_grad(ir)) {
      Tensor& gr = tp.grad(ir);
      for (std::size_t i = 0; i < g.rows(); ++i) kernels::axpy(1.0, g.row(i), gr.ptr(), gr.size());
    }
  });
}

Var tanh(Var a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(
      a, "sigmoid",
      [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var relu(Var a) {
  return unary(
      a, "relu", [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var exp(Var a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var clamp(Var a, double lo, double hi) {
  return unary(
      a, "clamp", [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul");
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_rank(A, 2, "matmul");
  require_rank(B, 2, "matmul");
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  if (B.rows() != k) throw UsageError("matmul: inner dimensions differ " + shape_string(A.shape()) + " x " + shape_string(B.shape()));
  Tensor C(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) kernels::axpy(A.at(i, p), B.row(p), C.row(i), n);
  }
  const auto ia = a.id(), ib = b.id();
  return t.record("matmul", std::move(C), {a, b}, [ia, ib, m, k, n](Tape& tp, const Tensor& g, const Tensor&) {
    const Tensor& Av = tp.value(ia);
    const Tensor& Bv = tp.value(ib);
    if (tp.needs_grad(ia)) {
      Tensor& ga = tp.grad(ia);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) ga.at(i, p) += kernels::dot(g.row(i), Bv.row(p), n);
    }
    if (tp.needs_grad(ib)) {
      Tensor& gb = tp.grad(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) kernels::axpy(Av.at(i, p), g.row(i), gb.row(p), n);
    }
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul_nt");
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_rank(A, 2, "matmul_nt");
  require_rank(B, 2, "matmul_nt");
  const std::size_t m = A.rows(), k = A.cols(), n = B.rows();
  if (B.cols() != k) throw UsageError("matmul_nt: inner dimensions differ " + shape_string(A.shape()) + " x " + shape_string(B.shape()) + "^T");
  Tensor C(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) C.at(i, j) = kernels::dot(A.row(i), B.row(j), k);
  const auto ia = a.id(), ib = b.id();
  return t.record("matmul_nt", std::move(C), {a, b}, [ia, ib, m, k, n](Tape& tp, const Tensor& g, const Tensor&) {
    const Tensor& Av = tp.value(ia);
    const Tensor& Bv = tp.value(ib);
    if (tp.needs_grad(ia)) {
      Tensor& ga = tp.grad(ia);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) kernels::axpy(g.at(i, j), Bv.row(j), ga.row(i), k);
    }
    if (tp.needs_grad(ib)) {
      Tensor& gb = tp.grad(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) kernels::axpy(g.at(i, j), Av.row(i), gb.row(j), k);
    }
  });
}

Var matvec(Var w, Var x) {
  Tape& t = same_tape(w, x, "matvec");
  const Tensor& W = w.value();
  const Tensor& X = x.value();
  require_rank(W, 2, "matvec");
  if (!is_vector_like(X) || X.size() != W.cols()) {
    throw UsageError("matvec: " + shape_string(W.shape()) + " times " + shape_string(X.shape()));
  }
  const std::size_t m = W.rows(), n = W.cols();
  Tensor y(Shape{m});
  for (std::size_t i = 0; i < m; ++i) y[i] = kernels::dot(W.row(i), X.ptr(), n);
  const auto iw = w.id(), ix = x.id();
  return t.record("matvec", std::move(y), {w, x}, [iw, ix, m, n](Tape& tp, const Tensor& g, const Tensor&) {
    const Tensor& Wv = tp.value(iw);
    const Tensor& Xv = tp.value(ix);
    if (tp.needs_grad(iw)) {
      Tensor& gw = tp.grad(iw);
      for (std::size_t i = 0; i < m; ++i) kernels::axpy(g[i], Xv.ptr(), gw.row(i), n);
    }
    if (tp.needs_grad(ix)) {
      Tensor& gx = tp.grad(ix);
      for (std::size_t i = 0; i < m; ++i) kernels::axpy(g[i], Wv.row(i), gx.ptr(), n);
    }
  });
}

Var affine(Var w, Var x, Var b) { return add(matvec(w, x), b); }

Var linear_rows(Var x, Var w, Var b) { return add_row(matmul_nt(x, w), b); }

Var concat(std::initializer_list<Var> parts) { return concat(std::span<const Var>(parts.begin(), parts.size())); }

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw UsageError("concat: no inputs");
  Tape& t = *parts.front().tape();
  std::vector<std::size_t> offsets;
  std::vector<std::uint32_t> ids;
  std::size_t total = 0;
  for (Var p : parts) {
    same_tape(parts.front(), p, "concat");
    if (!is_vector_like(p.value())) throw UsageError("concat: expects rank 0/1 inputs, got " + shape_string(p.shape()));
    offsets.push_back(total);
    ids.push_back(p.id());
    total += p.size();
  }
  Tensor y(Shape{total});
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor& v = parts[i].value();
    std::copy(v.ptr(), v.ptr() + v.size(), y.ptr() + offsets[i]);
  }
  return t.record("concat", std::move(y), parts, [ids, offsets](Tape& tp, const Tensor& g, const Tensor&) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!tp.needs_grad(ids[i])) continue;
      Tensor& gi = tp.grad(ids[i]);
      kernels::axpy(1.0, g.ptr() + offsets[i], gi.ptr(), gi.size());
    }
  });
}

Var hconcat(std::span<const Var> parts) {
  if (parts.empty()) throw UsageError("hconcat: no inputs");
  Tape& t = *parts.front().tape();
  const std::size_t rows = parts.front().value().rows();
  std::vector<std::size_t> offsets, widths;
  std::vector<std::uint32_t> ids;
  std::size_t total = 0;
  for (Var p : parts) {
    same_tape(parts.front(), p, "hconcat");
    require_rank(p.value(), 2, "hconcat");
    if (p.value().rows() != rows) throw UsageError("hconcat: row counts differ");
    offsets.push_back(total);
    widths.push_back(p.value().cols());
    ids.push_back(p.id());
    total += p.value().cols();
  }
  Tensor y(Shape{rows, total});
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor& v = parts[i].value();
    for (std::size_t r = 0; r < rows; ++r) std::copy(v.row(r), v.row(r) + widths[i], y.row(r) + offsets[i]);
  }
  return t.record("hconcat", std::move(y), parts, [ids, offsets, widths, rows](Tape& tp, const Tensor& g, const Tensor&) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!tp.needs_grad(ids[i])) continue;
      Tensor& gi = tp.grad(ids[i]);
      for (std::size_t r = 0; r < rows; ++r) kernels::axpy(1.0, g.row(r) + offsets[i], gi.row(r), widths[i]);
    }
  });
}

Var vstack(std::initializer_list<Var> parts) { return vstack(std::span<const Var>(parts.begin(), parts.size())); }

Var vstack(std::span<const Var> parts) {
  if (parts.empty()) throw UsageError("vstack: no inputs");
  Tape& t = *parts.front().tape();
  const std::size_t cols = parts.front().value().cols();
  std::vector<std::size_t> offsets;
  std::vector<std::uint32_t> ids;
  std::size_t rows = 0;
  for (Var p : parts) {
    same_tape(parts.front(), p, "vstack");
    const Tensor& v = p.value();
    if (v.rank() > 2 || v.cols() != cols) throw UsageError("vstack: column counts differ");
    offsets.push_back(rows);
    ids.push_back(p.id());
    rows += v.rows();
  }
  Tensor y(Shape{rows, cols});
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor& v = parts[i].value();
    std::copy(v.ptr(), v.ptr() + v.size(), y.row(offsets[i]));
  }
  return t.record("vstack", std::move(y), parts, [ids, offsets](Tape& tp, const Tensor& g, const Tensor&) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!tp.needs_grad(ids[i])) continue;
      Tensor& gi = tp.grad(ids[i]);
      kernels::axpy(1.0, g.row(offsets[i]), gi.ptr(), gi.size());
    }
  });
}

Var slice(Var x, std::size_t start, std::size_t len) {
  const Tensor& v = x.value();
  if (!is_vector_like(v) || len == 0 || start + len > v.size()) {
    throw UsageError("slice: [" + std::to_string(start) + ", +" + std::to_string(len) + ") out of " + shape_string(v.shape()));
  }
  Tensor y(Shape{len});
  std::copy(v.ptr() + start, v.ptr() + start + len, y.ptr());
  const auto ix = x.id();
  return x.tape()->record("slice", std::move(y), {x}, [ix, start, len](Tape& tp, const Tensor& g, const Tensor&) {
    kernels::axpy(1.0, g.ptr(), tp.grad(ix).ptr() + start, len);
  });
}

Var cols(Var x, std::size_t start, std::size_t len) {
  const Tensor& v = x.value();
  require_rank(v, 2, "cols");
  if (len == 0 || start + len > v.cols()) throw UsageError("cols: range out of bounds");
  const std::size_t rows = v.rows();
  Tensor y(Shape{rows, len});
  for (std::size_t r = 0; r < rows; ++r) std::copy(v.row(r) + start, v.row(r) + start + len, y.row(r));
  const auto ix = x.id();
  return x.tape()->record("cols", std::move(y), {x}, [ix, start, len, rows](Tape& tp, const Tensor& g, const Tensor&) {
    Tensor& gx = tp.grad(ix);
    for (std::size_t r = 0; r < rows; ++r) kernels::axpy(1.0, g.row(r), gx.row(r) + start, len);
  });
}

Var row(Var x, std::size_t r) {
  const Tensor& v = x.value();
  require_rank(v, 2, "row");
  if (r >= v.rows()) throw UsageError("row: index out of bounds");
  const std::size_t c = v.cols();
  Tensor y(Shape{c});
  std::copy(v.row(r), v.row(r) + c, y.ptr());
  const auto ix = x.id();
  return x.tape()->record("row", std::move(y), {x}, [ix, r, c](Tape& tp, const Tensor& g, const Tensor&) {
    kernels::axpy(1.0, g.ptr(), tp.grad(ix).row(r), c);
  });
}

Var reshape(Var x, Shape shape) {
  const Tensor& v = x.value();
  if (shape_size(shape) != v.size()) throw UsageError("reshape: size mismatch " + shape_string(v.shape()) + " -> " + shape_string(shape));
  Tensor y(std::move(shape), v.values());
  const auto ix = x.id();
  return x.tape()->record("reshape", std::move(y), {x}, [ix](Tape& tp, const Tensor& g, const Tensor&) {
    kernels::axpy(1.0, g.ptr(), tp.grad(ix).ptr(), g.size());
  });
}

Var pick(Var x, std::size_t index) {
  const Tensor& v = x.value();
  if (index >= v.size()) throw UsageError("pick: index out of bounds");
  const auto ix = x.id();
  return x.tape()->record("pick", Tensor::scalar(v[index]), {x}, [ix, index](Tape& tp, const Tensor& g, const Tensor&) {
    tp.grad(ix)[index] += g[0];
  });
}

Var sum(Var x) {
  const Tensor& v = x.value();
  const auto ix = x.id();
  return x.tape()->record("sum", Tensor::scalar(kernels::sum(v.ptr(), v.size())), {x},
                          [ix](Tape& tp, const Tensor& g, const Tensor&) {
                            for (double& d : tp.grad(ix).data()) d += g[0];
                          });
}

Var mean(Var x) {
  const Tensor& v = x.value();
  const double n = static_cast<double>(v.size());
  const auto ix = x.id();
  return x.tape()->record("mean", Tensor::scalar(kernels::sum(v.ptr(), v.size()) / n), {x},
                          [ix, n](Tape& tp, const Tensor& g, const Tensor&) {
                            for (double& d : tp.grad(ix).data()) d += g[0] / n;
                          });
}

Var max(Var x) {
  const Tensor& v = x.value();
  const std::size_t arg = num::argmax(v.data());
  const auto ix = x.id();
  return x.tape()->record("max", Tensor::scalar(v[arg]), {x}, [ix, arg](Tape& tp, const Tensor& g, const Tensor&) {
    tp.grad(ix)[arg] += g[0];
  });
}

Var mean_rows(Var x) {
  const Tensor& v = x.value();
  require_rank(v, 2, "mean_rows");
  const std::size_t rows = v.rows(), c = v.cols();
  const double inv = 1.0 / static_cast<double>(rows);
  Tensor y(Shape{c});
  for (std::size_t r = 0; r < rows; ++r) kernels::axpy(inv, v.row(r), y.ptr(), c);
  const auto ix = x.id();
  return x.tape()->record("mean_rows", std::move(y), {x}, [ix, rows, c, inv](Tape& tp, const Tensor& g, const Tensor&) {
    Tensor& gx = tp.grad(ix);
    for (std::size_t r = 0; r < rows; ++r) kernels::axpy(inv, g.ptr(), gx.row(r), c);
  });
}

Var max_rows(Var x) {
  const Tensor& v = x.value();
  require_rank(v, 2, "max_rows");
  const std::size_t rows = v.rows(), c = v.cols();
  Tensor y(Shape{c});
  std::vector<std::size_t> arg(c, 0);
  for (std::size_t j = 0; j < c; ++j) {
    double best = v.at(0, j);
    for (std::size_t r = 1; r < rows; ++r) {
      if (v.at(r, j) > best) {
        best = v.at(r, j);
        arg[j] = r;
      }
    }
    y[j] = best;
  }
  const auto ix = x.id();
  return x.tape()->record("max_rows", std::move(y), {x}, [ix, arg](Tape& tp, const Tensor& g, const Tensor&) {
    Tensor& gx = tp.grad(ix);
    for (std::size_t j = 0; j < arg.size(); ++j) gx.at(arg[j], j) += g[j];
  });
}

Var embedding(Var table, std::span<const int> ids) {
  const Tensor& tbl = table.value();
  require_rank(tbl, 2, "embedding");
  if (ids.empty()) throw UsageError("embedding: empty id sequence");
  const std::size_t d = tbl.cols();
  Tensor y(Shape{ids.size(), d});
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= tbl.rows()) {
      throw UsageError("embedding: token id " + std::to_string(ids[t]) + " out of range for table of " +
                       std::to_string(tbl.rows()) + " rows");
    }
    std::copy(tbl.row(ids[t]), tbl.row(ids[t]) + d, y.row(t));
  }
  const auto it = table.id();
  std::vector<int> saved(ids.begin(), ids.end());
  return table.tape()->record("embedding", std::move(y), {table}, [it, saved, d](Tape& tp, const Tensor& g, const Tensor&) {
    Tensor& gt = tp.grad(it);
    for (std::size_t t = 0; t < saved.size(); ++t) kernels::axpy(1.0, g.row(t), gt.row(saved[t]), d);
  });
}

namespace {

void softmax_into(const double* x, double* y, std::size_t n) {
  const double m = kernels::max(x, n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = std::exp(x[i] - m);
    z += y[i];
  }
  const double inv = 1.0 / z;
  for (std::size_t i = 0; i < n; ++i) y[i] *= inv;
}

double lse(const double* x, std::size_t n) {
  const double m = kernels::max(x, n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) z += std::exp(x[i] - m);
  return m + std::log(z);
}

}  // namespace

Var softmax(Var x) {
  const Tensor& v = x.value();
  if (!is_vector_like(v)) throw UsageError("softmax: expects a vector");
  Tensor y(v.shape());
  softmax_into(v.ptr(), y.ptr(), v.size());
  const auto ix = x.id();
  return x.tape()->record("softmax", std::move(y), {x}, [ix](Tape& tp, const Tensor& g, const Tensor& out) {
    const double gy = kernels::dot(g.ptr(), out.ptr(), g.size());
    Tensor& gx = tp.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += out[i] * (g[i] - gy);
  });
}

Var log_softmax(Var x) {
  const Tensor& v = x.value();
  if (!is_vector_like(v)) throw UsageError("log_softmax: expects a vector");
  const double l = lse(v.ptr(), v.size());
  Tensor y(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) y[i] = v[i] - l;
  const auto ix = x.id();
  return x.tape()->record("log_softmax", std::move(y), {x}, [ix](Tape& tp, const Tensor& g, const Tensor& out) {
    const double gs = kernels::sum(g.ptr(), g.size());
    Tensor& gx = tp.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] - std::exp(out[i]) * gs;
  });
}

Var softmax_rows(Var x) {
  const Tensor& v = x.value();
  require_rank(v, 2, "softmax_rows");
  Tensor y(v.shape());
  for (std::size_t r = 0; r < v.rows(); ++r) softmax_into(v.row(r), y.row(r), v.cols());
  const auto ix = x.id();
  return x.tape()->record("softmax_rows", std::move(y), {x}, [ix](Tape& tp, const Tensor& g, const Tensor& out) {
    Tensor& gx = tp.grad(ix);
    const std::size_t c = out.cols();
    for (std::size_t r = 0; r < out.rows(); ++r) {
      const double gy = kernels::dot(g.row(r), out.row(r), c);
      for (std::size_t j = 0; j < c; ++j) gx.at(r, j) += out.at(r, j) * (g.at(r, j) - gy);
    }
  });
}

Var logsumexp(Var x) {
  const Tensor& v = x.value();
  const double l = num::logsumexp(v.data());
  const auto ix = x.id();
  return x.tape()->record("logsumexp", Tensor::scalar(l), {x}, [ix](Tape& tp, const Tensor& g, const Tensor& out) {
    const Tensor& xin = tp.value(ix);
    Tensor& gx = tp.grad(ix);
    for (std::size_t i = 0; i < xin.size(); ++i) gx[i] += g[0] * std::exp(xin[i] - out[0]);
  });
}

Var cross_entropy(Var logits, std::size_t target) {
  const Tensor& v = logits.value();
  if (!is_vector_like(v) || target >= v.size()) throw UsageError("cross_entropy: target out of range");
  const double l = lse(v.ptr(), v.size());
  const auto ix = logits.id();
  return logits.tape()->record("cross_entropy", Tensor::scalar(l - v[target]), {logits},
                               [ix, target, l](Tape& tp, const Tensor& g, const Tensor&) {
                                 const Tensor& xin = tp.value(ix);
                                 Tensor& gx = tp.grad(ix);
                                 for (std::size_t i = 0; i < xin.size(); ++i) gx[i] += g[0] * std::exp(xin[i] - l);
                                 gx[target] -= g[0];
                               });
}

Var nll_rows(Var logits, std::span<const int> targets) {
  const Tensor& v = logits.value();
  require_rank(v, 2, "nll_rows");
  if (targets.size() != v.rows()) throw UsageError("nll_rows: one target per row required");
  const std::size_t c = v.cols();
  std::vector<double> norms(v.rows());
  double total = 0.0;
  for (std::size_t r = 0; r < v.rows(); ++r) {
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= c) throw UsageError("nll_rows: target out of range");
    norms[r] = lse(v.row(r), c);
    total += norms[r] - v.at(r, targets[r]);
  }
  const auto ix = logits.id();
  std::vector<int> saved(targets.begin(), targets.end());
  return logits.tape()->record("nll_rows", Tensor::scalar(total), {logits},
                               [ix, saved, norms, c](Tape& tp, const Tensor& g, const Tensor&) {
                                 const Tensor& xin = tp.value(ix);
                                 Tensor& gx = tp.grad(ix);
                                 for (std::size_t r = 0; r < saved.size(); ++r) {
                                   const double* xr = xin.row(r);
                                   double* gr = gx.row(r);
                                   for (std::size_t j = 0; j < c; ++j) gr[j] += g[0] * std::exp(xr[j] - norms[r]);
                                   gr[saved[r]] -= g[0];
                                 }
                               });
}

Var layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  Tape& t = same_tape(x, gain, "layer_norm_rows");
  same_tape(x, bias, "layer_norm_rows");
  const Tensor& v = x.value();
  require_rank(v, 2, "layer_norm_rows");
  const std::size_t rows = v.rows(), c = v.cols();
  if (gain.size() != c || bias.size() != c) throw UsageError("layer_norm_rows: gain/bias width mismatch");
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  Tensor xhat(v.shape());
  std::vector<double> inv(rows);
  Tensor y(v.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double mu = kernels::sum(v.row(r), c) / static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (v.at(r, j) - mu) * (v.at(r, j) - mu);
    var /= static_cast<double>(c);
    inv[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat.at(r, j) = (v.at(r, j) - mu) * inv[r];
      y.at(r, j) = gv[j] * xhat.at(r, j) + bv[j];
    }
  }
  const auto ix = x.id(), ig = gain.id(), ib = bias.id();
  return t.record("layer_norm_rows", std::move(y), {x, gain, bias},
                  [ix, ig, ib, xhat = std::move(xhat), inv, rows, c](Tape& tp, const Tensor& g, const Tensor&) {
                    const Tensor& gv2 = tp.value(ig);
                    if (tp.needs_grad(ig)) {
                      Tensor& gg = tp.grad(ig);
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < c; ++j) gg[j] += g.at(r, j) * xhat.at(r, j);
                    }
                    if (tp.needs_grad(ib)) {
                      Tensor& gb = tp.grad(ib);
                      for (std::size_t r = 0; r < rows; ++r) kernels::axpy(1.0, g.row(r), gb.ptr(), c);
                    }
                    if (tp.needs_grad(ix)) {
                      Tensor& gx = tp.grad(ix);
                      std::vector<double> dxhat(c);
                      for (std::size_t r = 0; r < rows; ++r) {
                        double m1 = 0.0, m2 = 0.0;
                        for (std::size_t j = 0; j < c; ++j) {
                          dxhat[j] = g.at(r, j) * gv2[j];
                          m1 += dxhat[j];
                          m2 += dxhat[j] * xhat.at(r, j);
                        }
                        m1 /= static_cast<double>(c);
                        m2 /= static_cast<double>(c);
                        for (std::size_t j = 0; j < c; ++j) gx.at(r, j) += inv[r] * (dxhat[j] - m1 - xhat.at(r, j) * m2);
                      }
                    }
                  });
}

Var dropout(Var x, double p, std::mt19937_64& rng) {
  if (p < 0.0 || p >= 1.0) throw UsageError("dropout: probability must lie in [0, 1)");
  Tape& t = *x.tape();
  if (p == 0.0 || !t.training()) return x;
  std::bernoulli_distribution keep(1.0 - p);
  Tensor mask(x.shape());
  const double s = 1.0 / (1.0 - p);
  for (double& m : mask.data()) m = keep(rng) ? s : 0.0;
  return mul(x, t.constant(std::move(mask)));
}

}  // namespace ag

namespace num {

double logsumexp(std::span<const double> x) {
  if (x.empty()) throw NumericalError("empty reduction");
  for (double v : x) {
    if (!std::isfinite(v)) throw NumericalError("non-finite input to logsumexp");
  }
  return ag::lse(x.data(), x.size());
}

std::vector<double> softmax(std::span<const double> x) {
  if (x.empty()) throw NumericalError("empty reduction");
  for (double v : x) {
    if (!std::isfinite(v)) throw NumericalError("non-finite input to softmax");
  }
  std::vector<double> y(x.size());
  ag::softmax_into(x.data(), y.data(), x.size());
  return y;
}

std::vector<double> log_softmax(std::span<const double> x) {
  const double l = logsumexp(x);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] - l;
  return y;
}

std::size_t argmax(std::span<const double> x) {
  if (x.empty()) throw NumericalError("empty reduction");
  std::size_t best = 0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (x[i] > x[best]) best = i;
  }
  return best;
}

}  // namespace num

}  // namespace sevae
