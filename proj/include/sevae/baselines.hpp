#pragma once

// Comparison systems: a discriminative LSTM, a class-conditioned LSTM
// language model, its extension with a discrete latent variable, and a
// hierarchical paragraph-level Bi-LSTM tagger.

#include <array>
#include <span>
#include <vector>

#include "sevae/model.hpp"

namespace sevae {

// Mean-pooled LSTM states -> affine -> softmax.
class DiscriminativeModel final : public Model {
 public:
  DiscriminativeModel(const ModelSpec& spec, std::uint64_t seed);

  // Unnormalised label scores.
  Var logits(Tape& tape, std::span<const int> ids, Rng& rng) const;

  LossParts loss(Tape& tape, std::span<const Example> unit, Rng& rng) override;
  std::vector<LabelProbs> predict(std::span<const Example> unit) const override;

  const Linear& output() const { return out_; }

 private:
  Embedding embed_;
  Lstm lstm_;
  Linear out_;
};

// log p(x, y) = sum_t log p(x_t | x_<t, y) + log p(y). The next-token softmax
// reads [h_t; v_y]; EOS is scored. p(y) is fixed from the training labels.
class ClassLmModel : public Model {
 public:
  ClassLmModel(const ModelSpec& spec, std::uint64_t seed, const LabelProbs& prior);

  Var log_likelihood(Tape& tape, std::span<const int> ids, int label, Rng& rng) const;
  // log p(x|y) + log p(y) for every label.
  std::array<double, kNumLabels> joint_scores(std::span<const int> ids) const;
  // argmax of joint_scores, lowest code on ties.
  int predict_label(std::span<const int> ids) const;

  LossParts loss(Tape& tape, std::span<const Example> unit, Rng& rng) override;
  std::vector<LabelProbs> predict(std::span<const Example> unit) const override;

  const Parameter& label_log_prior() const { return *log_prior_; }
  Parameter& output_weight() const { return *out_hidden_; }
  Parameter& output_label_weight() const { return *out_label_; }
  Parameter& output_bias() const { return *out_bias_; }

 protected:
  // Decoder states for every input position (BOS + tokens), one row each.
  Var hidden_rows(Tape& tape, std::span<const int> inputs, int label, Rng& rng) const;

  Embedding embed_;
  Parameter* label_embed_ = nullptr;  // 7 x label_dim
  Lstm lstm_;
  Parameter* out_hidden_ = nullptr;  // V x hidden
  Parameter* out_label_ = nullptr;   // V x label_dim
  Parameter* out_bias_ = nullptr;    // V
  Parameter* log_prior_ = nullptr;   // 7, not trained
};

// p(x, y, c) = p(x | c, y) p(c) p(y), with c one of C discrete values and
// the emission softmax over [h_t; v_y; v_c]. Trained on the exact marginal.
class LatentClassLmModel final : public ClassLmModel {
 public:
  LatentClassLmModel(const ModelSpec& spec, std::uint64_t seed, const LabelProbs& prior);

  std::size_t num_latent() const { return spec_.latent_classes; }
  // log p(c), length C.
  Var latent_log_prior(Tape& tape) const;
  std::vector<double> latent_prior() const;
  // log p(x | c, y) for every c of one label, length C.
  Var conditional_log_likelihoods(Tape& tape, std::span<const int> ids, int label, Rng& rng) const;
  // -[logsumexp_c(log p(x|c,y) + log p(c)) + log p(y)]
  Var marginal_loss(Tape& tape, std::span<const int> ids, int label, Rng& rng) const;
  // table[y][c] = log p(x|c,y) + log p(c)
  std::vector<std::vector<double>> score_table(std::span<const int> ids) const;
  std::array<double, kNumLabels> joint_scores(std::span<const int> ids) const;
  int predict_label(std::span<const int> ids) const;

  LossParts loss(Tape& tape, std::span<const Example> unit, Rng& rng) override;
  std::vector<LabelProbs> predict(std::span<const Example> unit) const override;

  Parameter& latent_embeddings() const { return *latent_embed_; }
  Parameter& prior_weight() const { return *prior_weight_; }
  Parameter& prior_bias() const { return *prior_bias_; }
  Parameter& output_latent_weight() const { return *out_latent_; }

 private:
  // Rows of per-label, per-latent log-likelihoods for the given labels.
  std::vector<Var> label_rows(Tape& tape, std::span<const int> ids, std::span<const int> labels, Rng& rng) const;

  Parameter* latent_embed_ = nullptr;  // C x latent_class_dim
  Parameter* prior_weight_ = nullptr;  // C x latent_class_dim
  Parameter* prior_bias_ = nullptr;    // C
  Parameter* out_latent_ = nullptr;    // V x latent_class_dim
};

// Word-level Bi-LSTM over the whole paragraph, max-pooled per clause, then a
// clause-level Bi-LSTM and an affine softmax per clause. No CRF.
class ContextAwareModel final : public Model {
 public:
  ContextAwareModel(const ModelSpec& spec, std::uint64_t seed);

  bool paragraph_level() const override { return true; }
  // One logit vector per clause, in paragraph order.
  std::vector<Var> forward(Tape& tape, std::span<const Example> paragraph, Rng& rng) const;

  LossParts loss(Tape& tape, std::span<const Example> unit, Rng& rng) override;
  std::vector<LabelProbs> predict(std::span<const Example> unit) const override;

  const Linear& output() const { return out_; }

 private:
  Embedding embed_;
  Lstm word_fwd_, word_bwd_;
  Lstm clause_fwd_, clause_bwd_;
  Linear out_;
};

}  // namespace sevae
