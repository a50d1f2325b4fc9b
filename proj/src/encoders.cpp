#include "sevae/encoders.hpp"

#include "sevae/error.hpp"
#include "sevae/text.hpp"

namespace sevae {

std::string_view encoder_kind_name(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::lstm_pool: return "lstm-pool";
    case EncoderKind::bilstm_pool: return "bilstm-pool";
    case EncoderKind::transformer_cls: return "mini-transformer-cls";
  }
  return "?";
}

EncoderKind parse_encoder_kind(std::string_view name) {
  if (name == "lstm-pool") return EncoderKind::lstm_pool;
  if (name == "bilstm-pool") return EncoderKind::bilstm_pool;
  if (name == "mini-transformer-cls") return EncoderKind::transformer_cls;
  throw UsageError("unknown encoder kind '" + std::string(name) + "'");
}

void EncoderConfig::validate() const {
  if (vocab_size <= static_cast<std::size_t>(Vocab::kNumSpecial)) throw UsageError("encoder vocab_size too small");
  if (embed_dim < 1 || hidden_dim < 1) throw UsageError("encoder dimensions must be >= 1");
  if (kind == EncoderKind::transformer_cls && (heads == 0 || embed_dim % heads != 0)) {
    throw UsageError("encoder heads must divide embed_dim");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw UsageError("encoder dropout must lie in [0, 1)");
  if (max_len < 1) throw UsageError("encoder max_len must be >= 1");
}

void Encoder::check_input(std::span<const int> ids) const {
  if (ids.empty()) throw DataError("cannot encode an empty token sequence");
  if (ids.size() > cfg_.max_len) {
    throw DataError("sequence of " + std::to_string(ids.size()) + " tokens exceeds max_len " +
                    std::to_string(cfg_.max_len));
  }
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= cfg_.vocab_size) {
      throw UsageError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(cfg_.vocab_size));
    }
  }
}

// ---------------------------------------------------------------------------

LstmPoolEncoder::LstmPoolEncoder(ParamStore& store, const std::string& name, const EncoderConfig& cfg, Rng& rng)
    : Encoder(cfg) {
  cfg.validate();
  embed_ = Embedding(store, name + ".embed", cfg.vocab_size, cfg.embed_dim, rng);
  lstm_ = Lstm(store, name + ".lstm", cfg.embed_dim, cfg.hidden_dim, rng);
}

Var LstmPoolEncoder::encode_pooled(Tape& tape, std::span<const int> ids, Rng& rng) const {
  check_input(ids);
  Var x = ag::dropout(embed_(tape, ids), cfg_.dropout, rng);
  std::vector<Var> states = lstm_.run(tape, x);
  return ag::mean_rows(ag::vstack(states));
}

BiLstmEncoder::BiLstmEncoder(ParamStore& store, const std::string& name, const EncoderConfig& cfg, Rng& rng)
    : Encoder(cfg) {
  cfg.validate();
  embed_ = Embedding(store, name + ".embed", cfg.vocab_size, cfg.embed_dim, rng);
  forward_ = Lstm(store, name + ".fwd", cfg.embed_dim, cfg.hidden_dim, rng);
  backward_ = Lstm(store, name + ".bwd", cfg.embed_dim, cfg.hidden_dim, rng);
}

std::vector<Var> BiLstmEncoder::encode_sequence(Tape& tape, std::span<const int> ids, Rng& rng) const {
  check_input(ids);
  Var x = ag::dropout(embed_(tape, ids), cfg_.dropout, rng);
  std::vector<Var> fwd = forward_.run(tape, x);
  std::vector<Var> bwd = backward_.run(tape, x, std::nullopt, /*reverse=*/true);
  std::vector<Var> out(ids.size());
  for (std::size_t t = 0; t < ids.size(); ++t) out[t] = ag::concat({fwd[t], bwd[t]});
  return out;
}

Var BiLstmEncoder::encode_pooled(Tape& tape, std::span<const int> ids, Rng& rng) const {
  return ag::mean_rows(ag::vstack(encode_sequence(tape, ids, rng)));
}

TransformerClsEncoder::TransformerClsEncoder(ParamStore& store, const std::string& name, const EncoderConfig& cfg,
                                             Rng& rng)
    : Encoder(cfg) {
  cfg.validate();
  embed_ = Embedding(store, name + ".embed", cfg.vocab_size, cfg.embed_dim, rng);
  positions_ = &store.add(name + ".positions", uniform_init(Shape{cfg.max_len + 1, cfg.embed_dim}, 0.1, rng));
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    blocks_.emplace_back(store, name + ".block" + std::to_string(l), cfg.embed_dim, cfg.heads, cfg.ffn_dim, rng);
  }
  final_ln_ = LayerNorm(store, name + ".ln_final", cfg.embed_dim);
}

Var TransformerClsEncoder::encode_pooled(Tape& tape, std::span<const int> ids, Rng& rng) const {
  check_input(ids);
  std::vector<int> with_cls;
  with_cls.reserve(ids.size() + 1);
  with_cls.push_back(Vocab::kCls);
  with_cls.insert(with_cls.end(), ids.begin(), ids.end());
  std::vector<int> pos(with_cls.size());
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<int>(i);
  Var x = ag::add(embed_(tape, with_cls), ag::embedding(tape.param(*positions_), pos));
  x = ag::dropout(x, cfg_.dropout, rng);
  for (const auto& block : blocks_) x = block(tape, x, /*causal=*/false);
  return ag::row(final_ln_(tape, x), 0);
}

std::unique_ptr<Encoder> make_encoder(ParamStore& store, const std::string& name, const EncoderConfig& cfg, Rng& rng) {
  switch (cfg.kind) {
    case EncoderKind::lstm_pool: return std::make_unique<LstmPoolEncoder>(store, name, cfg, rng);
    case EncoderKind::bilstm_pool: return std::make_unique<BiLstmEncoder>(store, name, cfg, rng);
    case EncoderKind::transformer_cls: return std::make_unique<TransformerClsEncoder>(store, name, cfg, rng);
  }
  throw UsageError("unknown encoder kind");
}

}  // namespace sevae
