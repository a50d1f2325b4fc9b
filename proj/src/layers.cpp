#include "sevae/layers.hpp"

#include <cmath>

#include "sevae/error.hpp"

namespace sevae {

Parameter& ParamStore::add(std::string name, Tensor init, bool trainable) {
  if (find(name)) throw UsageError("duplicate parameter name " + name);
  params_.push_back(std::make_unique<Parameter>(std::move(name), std::move(init), trainable));
  return *params_.back();
}

std::vector<Parameter*> ParamStore::all() const {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<Parameter*> ParamStore::trainable() const {
  std::vector<Parameter*> out;
  for (const auto& p : params_) {
    if (p->trainable()) out.push_back(p.get());
  }
  return out;
}

Parameter* ParamStore::find(std::string_view name) const {
  for (const auto& p : params_) {
    if (p->name() == name) return p.get();
  }
  return nullptr;
}

std::size_t ParamStore::num_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value().size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

std::vector<Tensor> ParamStore::snapshot() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p->value());
  return out;
}

void ParamStore::restore(const std::vector<Tensor>& values) {
  if (values.size() != params_.size()) throw UsageError("snapshot does not match parameter count");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].shape() != params_[i]->value().shape()) throw UsageError("snapshot shape mismatch for " + params_[i]->name());
    params_[i]->value() = values[i];
  }
}

Tensor xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  return uniform_init(Shape{rows, cols}, limit, rng);
}

Tensor uniform_init(Shape shape, double limit, Rng& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(-limit, limit);
  for (double& v : t.data()) v = u(rng);
  return t;
}

// ---------------------------------------------------------------------------

Linear::Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng, bool with_bias) {
  weight = &store.add(name + ".weight", xavier_uniform(out, in, rng));
  if (with_bias) bias = &store.add(name + ".bias", Tensor(Shape{out}));
}

Var Linear::operator()(Tape& tape, Var x) const {
  Var y = ag::matvec(tape.param(*weight), x);
  return bias ? ag::add(y, tape.param(*bias)) : y;
}

Var Linear::rows(Tape& tape, Var x) const {
  Var y = ag::matmul_nt(x, tape.param(*weight));
  return bias ? ag::add_row(y, tape.param(*bias)) : y;
}

Embedding::Embedding(ParamStore& store, const std::string& name, std::size_t vocab, std::size_t dim, Rng& rng) {
  table = &store.add(name, uniform_init(Shape{vocab, dim}, 0.1, rng));
}

Var Embedding::operator()(Tape& tape, std::span<const int> ids) const {
  return ag::embedding(tape.param(*table), ids);
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, std::size_t dim) {
  gain = &store.add(name + ".gain", Tensor(Shape{dim}, 1.0));
  bias = &store.add(name + ".bias", Tensor(Shape{dim}));
}

Var LayerNorm::operator()(Tape& tape, Var x) const {
  return ag::layer_norm_rows(x, tape.param(*gain), tape.param(*bias));
}

// ---------------------------------------------------------------------------

Lstm::Lstm(ParamStore& store, const std::string& name, std::size_t input_dim, std::size_t hidden_dim, Rng& rng)
    : input_(input_dim), hidden_(hidden_dim) {
  const double limit = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  w_input_ = &store.add(name + ".w_input", uniform_init(Shape{4 * hidden_dim, input_dim}, limit, rng));
  w_hidden_ = &store.add(name + ".w_hidden", uniform_init(Shape{4 * hidden_dim, hidden_dim}, limit, rng));
  bias_ = &store.add(name + ".bias", Tensor(Shape{4 * hidden_dim}));
}

std::vector<Var> Lstm::run(Tape& tape, Var inputs, const std::optional<State>& init, bool reverse) const {
  if (inputs.value().rank() != 2 || inputs.value().cols() != input_) {
    throw UsageError("lstm: expected (T x " + std::to_string(input_) + ") inputs, got " + shape_string(inputs.shape()));
  }
  const std::size_t steps = inputs.value().rows();
  const std::size_t H = hidden_;
  Var projected = ag::add_row(ag::matmul_nt(inputs, tape.param(*w_input_)), tape.param(*bias_));
  Var wh = tape.param(*w_hidden_);
  Var h, c;
  if (init) {
    h = init->h;
    c = init->c;
  }
  std::vector<Var> out(steps);
  for (std::size_t n = 0; n < steps; ++n) {
    const std::size_t t = reverse ? steps - 1 - n : n;
    Var gates = ag::row(projected, t);
    if (h.valid()) gates = ag::add(gates, ag::matvec(wh, h));
    Var i = ag::sigmoid(ag::slice(gates, 0, H));
    Var f = ag::sigmoid(ag::slice(gates, H, H));
    Var g = ag::tanh(ag::slice(gates, 2 * H, H));
    Var o = ag::sigmoid(ag::slice(gates, 3 * H, H));
    c = c.valid() ? ag::add(ag::mul(f, c), ag::mul(i, g)) : ag::mul(i, g);
    h = ag::mul(o, ag::tanh(c));
    out[t] = h;
  }
  return out;
}

// ---------------------------------------------------------------------------

TransformerBlock::TransformerBlock(ParamStore& store, const std::string& name, std::size_t dim, std::size_t heads,
                                   std::size_t ffn, Rng& rng)
    : dim_(dim), heads_(heads) {
  if (heads == 0 || dim % heads != 0) throw UsageError("attention heads must divide the model dimension");
  ln_attn_ = LayerNorm(store, name + ".ln_attn", dim);
  q_ = Linear(store, name + ".q", dim, dim, rng);
  k_ = Linear(store, name + ".k", dim, dim, rng);
  v_ = Linear(store, name + ".v", dim, dim, rng);
  o_ = Linear(store, name + ".o", dim, dim, rng);
  ln_ffn_ = LayerNorm(store, name + ".ln_ffn", dim);
  ffn_in_ = Linear(store, name + ".ffn_in", dim, ffn, rng);
  ffn_out_ = Linear(store, name + ".ffn_out", ffn, dim, rng);
}

Var TransformerBlock::operator()(Tape& tape, Var x, bool causal, std::optional<Var> memory) const {
  const std::size_t T = x.value().rows();
  const std::size_t dh = dim_ / heads_;
  const std::size_t offset = memory ? 1 : 0;
  Var h = ln_attn_(tape, x);
  Var q = q_.rows(tape, h);
  Var k = k_.rows(tape, h);
  Var v = v_.rows(tape, h);
  if (memory) {
    k = ag::vstack({*memory, k});
    v = ag::vstack({*memory, v});
  }
  std::optional<Var> mask;
  if (causal && T > 1) {
    Tensor m(Shape{T, T + offset});
    for (std::size_t i = 0; i < T; ++i)
      for (std::size_t j = i + 1; j < T; ++j) m.at(i, j + offset) = -1e9;
    mask = tape.constant(std::move(m));
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> heads;
  heads.reserve(heads_);
  for (std::size_t hd = 0; hd < heads_; ++hd) {
    Var qh = heads_ == 1 ? q : ag::cols(q, hd * dh, dh);
    Var kh = heads_ == 1 ? k : ag::cols(k, hd * dh, dh);
    Var vh = heads_ == 1 ? v : ag::cols(v, hd * dh, dh);
    Var scores = ag::scale(ag::matmul_nt(qh, kh), scale);
    if (mask) scores = ag::add(scores, *mask);
    heads.push_back(ag::matmul(ag::softmax_rows(scores), vh));
  }
  Var attn = heads_ == 1 ? heads.front() : ag::hconcat(heads);
  Var y = ag::add(x, o_.rows(tape, attn));
  Var f = ffn_out_.rows(tape, ag::relu(ffn_in_.rows(tape, ln_ffn_(tape, y))));
  return ag::add(y, f);
}

}  // namespace sevae
