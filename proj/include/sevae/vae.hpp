#pragma once

// Latent-variable clause classifier: an encoder produces a diagonal Gaussian
// q(z|x); z feeds both a label head p(y|z) and a text decoder p(x|z). Trained
// on the KL-weighted evidence lower bound, predicts from the posterior mean.

#include <memory>
#include <span>
#include <vector>

#include "sevae/encoders.hpp"
#include "sevae/model.hpp"

namespace sevae {

enum class DecoderKind { bow, lstm, xfmr_latent };

DecoderKind decoder_kind_for(ModelKind kind);

struct LatentGaussian {
  Var mu;
  Var logvar;
};

// Row of the latent export table.
struct LatentRow {
  std::string doc_id;
  int par_id = 0;
  int clause_idx = 0;
  SEType label = SEType::state;
  std::string genre;
  std::vector<double> mu;
};

class VaeModel final : public Model {
 public:
  VaeModel(const ModelSpec& spec, std::uint64_t seed);

  DecoderKind decoder_kind() const { return decoder_; }
  std::size_t latent_dim() const { return spec_.latent_dim; }

  // Two affine heads on the encoder output; log-variance is clamped.
  LatentGaussian posterior(Tape& tape, std::span<const int> ids, Rng& rng) const;
  // z = mu + exp(logvar / 2) * eps, with eps held constant.
  static Var reparameterize(Tape& tape, const LatentGaussian& q, std::span<const double> eps);
  // 0.5 * sum(mu^2 + exp(logvar) - 1 - logvar)
  static Var kl_to_standard_normal(const LatentGaussian& q);

  // log p(x | z) under the configured decoder.
  Var decode(Tape& tape, Var z, std::span<const int> ids, Rng& rng) const;
  Var decode_bow(Tape& tape, Var z, std::span<const int> ids) const;
  // BOS is prepended and EOS appended internally; EOS is scored.
  Var decode_autoregressive(Tape& tape, Var z, std::span<const int> ids, Rng& rng) const;
  // log p(y | z), a vector over the 7 labels.
  Var label_log_probs(Tape& tape, Var z) const;

  // -[w * log p(y|z) + log p(x|z)] + beta * KL with z = mu + sigma * eps.
  LossParts elbo_loss(Tape& tape, const Example& ex, std::span<const double> eps, Rng& rng) const;
  double current_beta() const;

  // softmax(classifier(mu)); never samples.
  LabelProbs classify_map(std::span<const int> ids) const;
  std::vector<double> posterior_mean(std::span<const int> ids) const;

  LossParts loss(Tape& tape, std::span<const Example> unit, Rng& rng) override;
  std::vector<LabelProbs> predict(std::span<const Example> unit) const override;

  // Named access for tests and ablations.
  Parameter& memory_projection() const { return *w_memory_; }
  Parameter& embedding_projection() const { return *w_embed_shift_; }
  const Linear& classifier() const { return classifier_; }
  const Linear& mu_head() const { return mu_head_; }
  const Linear& logvar_head() const { return logvar_head_; }
  // Output projection of the text decoder (bias may be null when tied).
  Parameter& decoder_output_weight() const;
  Parameter* decoder_output_bias() const;

 private:
  Var decode_lstm(Tape& tape, Var z, std::span<const int> ids, Rng& rng) const;
  Var decode_xfmr(Tape& tape, Var z, std::span<const int> ids, Rng& rng) const;
  Var output_logits(Tape& tape, Var hidden_rows) const;

  DecoderKind decoder_;
  std::unique_ptr<Encoder> encoder_;
  Linear mu_head_, logvar_head_, classifier_;

  // bow
  Linear bow_out_;
  // lstm / xfmr
  Embedding dec_embed_;
  Lstm dec_lstm_;
  Linear dec_init_h_, dec_init_c_;
  Parameter* dec_positions_ = nullptr;
  std::vector<TransformerBlock> dec_blocks_;
  LayerNorm dec_ln_;
  Parameter* w_memory_ = nullptr;       // (layers * dim) x P
  Parameter* w_embed_shift_ = nullptr;  // dim x P
  Parameter* out_weight_ = nullptr;     // V x dim (the embedding table when tied)
  Parameter* out_bias_ = nullptr;
};

std::vector<LatentRow> export_latents(const VaeModel& model, std::span<const Clause> clauses, const Vocab& vocab);
void write_latents_tsv(std::ostream& out, std::span<const LatentRow> rows);

}  // namespace sevae
