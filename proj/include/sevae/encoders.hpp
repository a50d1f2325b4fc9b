#pragma once

// Clause encoders: mean-pooled (Bi-)LSTMs and a small CLS-token transformer
// standing in for a pretrained BERT encoder.

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sevae/layers.hpp"

namespace sevae {

enum class EncoderKind { lstm_pool, bilstm_pool, transformer_cls };

std::string_view encoder_kind_name(EncoderKind kind);
EncoderKind parse_encoder_kind(std::string_view name);

struct EncoderConfig {
  EncoderKind kind = EncoderKind::transformer_cls;
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 128;
  std::size_t hidden_dim = 128;  // LSTM kinds only
  std::size_t layers = 2;        // transformer only
  std::size_t heads = 4;         // transformer only
  std::size_t ffn_dim = 256;     // transformer only
  std::size_t max_len = 128;
  double dropout = 0.0;

  // Throws UsageError on inconsistent geometry.
  void validate() const;
};

class Encoder {
 public:
  virtual ~Encoder() = default;

  // Clause representation: the mean of LSTM states, or the final CLS state.
  virtual Var encode_pooled(Tape& tape, std::span<const int> ids, Rng& rng) const = 0;
  virtual std::size_t output_dim() const = 0;
  const EncoderConfig& config() const { return cfg_; }

 protected:
  explicit Encoder(const EncoderConfig& cfg) : cfg_(cfg) {}
  // Length and id-range checks shared by every kind.
  void check_input(std::span<const int> ids) const;

  EncoderConfig cfg_;
};

class LstmPoolEncoder final : public Encoder {
 public:
  LstmPoolEncoder(ParamStore& store, const std::string& name, const EncoderConfig& cfg, Rng& rng);
  Var encode_pooled(Tape& tape, std::span<const int> ids, Rng& rng) const override;
  std::size_t output_dim() const override { return cfg_.hidden_dim; }

 private:
  Embedding embed_;
  Lstm lstm_;
};

class BiLstmEncoder final : public Encoder {
 public:
  BiLstmEncoder(ParamStore& store, const std::string& name, const EncoderConfig& cfg, Rng& rng);

  // Mean of the per-token concatenated states.
  Var encode_pooled(Tape& tape, std::span<const int> ids, Rng& rng) const override;
  // One [forward; backward] state of width 2*hidden_dim per token.
  std::vector<Var> encode_sequence(Tape& tape, std::span<const int> ids, Rng& rng) const;
  std::size_t output_dim() const override { return 2 * cfg_.hidden_dim; }

 private:
  Embedding embed_;
  Lstm forward_, backward_;
};

class TransformerClsEncoder final : public Encoder {
 public:
  TransformerClsEncoder(ParamStore& store, const std::string& name, const EncoderConfig& cfg, Rng& rng);

  // A CLS token is prepended; its final-layer state is the representation.
  Var encode_pooled(Tape& tape, std::span<const int> ids, Rng& rng) const override;
  std::size_t output_dim() const override { return cfg_.embed_dim; }

 private:
  Embedding embed_;
  Parameter* positions_ = nullptr;
  std::vector<TransformerBlock> blocks_;
  LayerNorm final_ln_;
};

std::unique_ptr<Encoder> make_encoder(ParamStore& store, const std::string& name, const EncoderConfig& cfg, Rng& rng);

}  // namespace sevae
