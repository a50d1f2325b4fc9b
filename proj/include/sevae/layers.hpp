#pragma once

// Parameter ownership and the small set of layers every model is built from.

#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sevae/autograd.hpp"

namespace sevae {

using Rng = std::mt19937_64;

// Owns named parameters with stable addresses, in registration order.
class ParamStore {
 public:
  Parameter& add(std::string name, Tensor init, bool trainable = true);

  std::vector<Parameter*> all() const;
  std::vector<Parameter*> trainable() const;
  Parameter* find(std::string_view name) const;
  std::size_t size() const { return params_.size(); }
  std::size_t num_values() const;

  void zero_grad();
  std::vector<Tensor> snapshot() const;
  void restore(const std::vector<Tensor>& values);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

Tensor xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng);
Tensor uniform_init(Shape shape, double limit, Rng& rng);

struct Linear {
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng, bool bias = true);

  // Vector input -> vector output.
  Var operator()(Tape& tape, Var x) const;
  // Matrix input (one row per position) -> matrix output.
  Var rows(Tape& tape, Var x) const;

  Parameter* weight = nullptr;  // out x in
  Parameter* bias = nullptr;    // out, may be null
};

struct Embedding {
  Embedding() = default;
  Embedding(ParamStore& store, const std::string& name, std::size_t vocab, std::size_t dim, Rng& rng);
  Var operator()(Tape& tape, std::span<const int> ids) const;
  std::size_t dim() const { return table->value().cols(); }

  Parameter* table = nullptr;
};

struct LayerNorm {
  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, std::size_t dim);
  Var operator()(Tape& tape, Var x) const;

  Parameter* gain = nullptr;
  Parameter* bias = nullptr;
};

// Single-layer LSTM, gate order (input, forget, cell, output).
class Lstm {
 public:
  struct State {
    Var h;
    Var c;
  };

  Lstm() = default;
  Lstm(ParamStore& store, const std::string& name, std::size_t input_dim, std::size_t hidden_dim, Rng& rng);

  // Runs over the rows of `inputs` (T x input_dim). With `reverse` the
  // sequence is consumed last-to-first; outputs are always returned in input
  // order. A missing initial state means zeros.
  std::vector<Var> run(Tape& tape, Var inputs, const std::optional<State>& init = std::nullopt,
                       bool reverse = false) const;

  std::size_t hidden_dim() const { return hidden_; }
  std::size_t input_dim() const { return input_; }

 private:
  Parameter* w_input_ = nullptr;   // 4H x in
  Parameter* w_hidden_ = nullptr;  // 4H x H
  Parameter* bias_ = nullptr;      // 4H
  std::size_t input_ = 0;
  std::size_t hidden_ = 0;
};

// Pre-norm transformer block. Optionally causal, optionally with one extra
// memory slot that every position can attend to; the memory vector is used
// directly as both key and value.
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(ParamStore& store, const std::string& name, std::size_t dim, std::size_t heads, std::size_t ffn,
                   Rng& rng);

  Var operator()(Tape& tape, Var x, bool causal, std::optional<Var> memory = std::nullopt) const;

 private:
  std::size_t dim_ = 0;
  std::size_t heads_ = 0;
  LayerNorm ln_attn_, ln_ffn_;
  Linear q_, k_, v_, o_, ffn_in_, ffn_out_;
};

}  // namespace sevae
