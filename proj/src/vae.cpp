#include "sevae/vae.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <ostream>

#include "sevae/error.hpp"

namespace sevae {

DecoderKind decoder_kind_for(ModelKind kind) {
  switch (kind) {
    case ModelKind::vae_bow: return DecoderKind::bow;
    case ModelKind::vae_lstm: return DecoderKind::lstm;
    case ModelKind::vae_xfmr: return DecoderKind::xfmr_latent;
    default: throw UsageError("model kind " + std::string(model_kind_name(kind)) + " has no text decoder");
  }
}

VaeModel::VaeModel(const ModelSpec& spec, std::uint64_t seed) : Model(spec), decoder_(decoder_kind_for(spec.kind)) {
  Rng rng(seed);
  const std::size_t V = spec_.vocab_size;
  const std::size_t P = spec_.latent_dim;
  const std::size_t D = spec_.dec_dim;

  EncoderConfig enc;
  enc.kind = spec_.encoder;
  enc.vocab_size = V;
  enc.embed_dim = spec_.enc_dim;
  enc.hidden_dim = spec_.enc_dim;
  enc.layers = spec_.enc_layers;
  enc.heads = spec_.enc_heads;
  enc.ffn_dim = spec_.enc_ffn;
  enc.max_len = spec_.max_len;
  enc.dropout = spec_.dropout;
  encoder_ = make_encoder(params_, "encoder", enc, rng);

  const std::size_t H = encoder_->output_dim();
  mu_head_ = Linear(params_, "posterior.mu", H, P, rng);
  logvar_head_ = Linear(params_, "posterior.logvar", H, P, rng);
  classifier_ = Linear(params_, "classifier", P, kNumLabels, rng);

  switch (decoder_) {
    case DecoderKind::bow:
      bow_out_ = Linear(params_, "decoder.bow", P, V, rng);
      break;
    case DecoderKind::lstm:
      dec_embed_ = Embedding(params_, "decoder.embed", V, D, rng);
      dec_lstm_ = Lstm(params_, "decoder.lstm", D + P, D, rng);
      dec_init_h_ = Linear(params_, "decoder.init_h", P, D, rng);
      dec_init_c_ = Linear(params_, "decoder.init_c", P, D, rng);
      break;
    case DecoderKind::xfmr_latent:
      dec_embed_ = Embedding(params_, "decoder.embed", V, D, rng);
      dec_positions_ = &params_.add("decoder.positions", uniform_init(Shape{spec_.max_len + 1, D}, 0.1, rng));
      w_memory_ = &params_.add("decoder.w_memory", xavier_uniform(spec_.dec_layers * D, P, rng));
      w_embed_shift_ = &params_.add("decoder.w_embed_shift", xavier_uniform(D, P, rng));
      for (std::size_t l = 0; l < spec_.dec_layers; ++l) {
        dec_blocks_.emplace_back(params_, "decoder.block" + std::to_string(l), D, spec_.dec_heads, spec_.dec_ffn, rng);
      }
      dec_ln_ = LayerNorm(params_, "decoder.ln_final", D);
      break;
  }
  if (decoder_ != DecoderKind::bow) {
    out_weight_ = spec_.tie_embeddings ? dec_embed_.table : &params_.add("decoder.out.weight", xavier_uniform(V, D, rng));
    out_bias_ = &params_.add("decoder.out.bias", Tensor(Shape{V}));
  }
}

Parameter& VaeModel::decoder_output_weight() const {
  return decoder_ == DecoderKind::bow ? *bow_out_.weight : *out_weight_;
}

Parameter* VaeModel::decoder_output_bias() const { return decoder_ == DecoderKind::bow ? bow_out_.bias : out_bias_; }

LatentGaussian VaeModel::posterior(Tape& tape, std::span<const int> ids, Rng& rng) const {
  Var h = encoder_->encode_pooled(tape, ids, rng);
  return {mu_head_(tape, h), ag::clamp(logvar_head_(tape, h), spec_.logvar_min, spec_.logvar_max)};
}

Var VaeModel::reparameterize(Tape& tape, const LatentGaussian& q, std::span<const double> eps) {
  if (eps.size() != q.mu.size()) {
    throw UsageError("reparameterize: eps has length " + std::to_string(eps.size()) + ", latent has " +
                     std::to_string(q.mu.size()));
  }
  Var noise = tape.constant(Tensor(Shape{eps.size()}, std::vector<double>(eps.begin(), eps.end())));
  return ag::add(q.mu, ag::mul(ag::exp(ag::scale(q.logvar, 0.5)), noise));
}

Var VaeModel::kl_to_standard_normal(const LatentGaussian& q) {
  Var terms = ag::sub(ag::add(ag::mul(q.mu, q.mu), ag::exp(q.logvar)), ag::add_scalar(q.logvar, 1.0));
  return ag::scale(ag::sum(terms), 0.5);
}

Var VaeModel::decode(Tape& tape, Var z, std::span<const int> ids, Rng& rng) const {
  return decoder_ == DecoderKind::bow ? decode_bow(tape, z, ids) : decode_autoregressive(tape, z, ids, rng);
}

Var VaeModel::decode_bow(Tape& tape, Var z, std::span<const int> ids) const {
  if (decoder_ != DecoderKind::bow) throw UsageError("decode_bow on a model without a bag-of-words decoder");
  if (ids.empty()) throw DataError("cannot score an empty token sequence");
  Tensor counts(Shape{spec_.vocab_size});
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= spec_.vocab_size) throw UsageError("token id outside vocabulary");
    counts[static_cast<std::size_t>(id)] += 1.0;
  }
  Var log_probs = ag::log_softmax(bow_out_(tape, z));
  return ag::sum(ag::mul(log_probs, tape.constant(std::move(counts))));
}

Var VaeModel::decode_autoregressive(Tape& tape, Var z, std::span<const int> ids, Rng& rng) const {
  if (ids.empty()) throw DataError("cannot score an empty token sequence");
  if (ids.size() > spec_.max_len) throw DataError("sequence exceeds max_len");
  switch (decoder_) {
    case DecoderKind::lstm: return decode_lstm(tape, z, ids, rng);
    case DecoderKind::xfmr_latent: return decode_xfmr(tape, z, ids, rng);
    case DecoderKind::bow: break;
  }
  throw UsageError("decode_autoregressive on a bag-of-words model");
}

Var VaeModel::output_logits(Tape& tape, Var hidden_rows) const {
  return ag::add_row(ag::matmul_nt(hidden_rows, tape.param(*out_weight_)), tape.param(*out_bias_));
}

namespace {

void shifted(std::span<const int> ids, std::vector<int>& inputs, std::vector<int>& targets) {
  inputs.assign(1, Vocab::kBos);
  inputs.insert(inputs.end(), ids.begin(), ids.end());
  targets.assign(ids.begin(), ids.end());
  targets.push_back(Vocab::kEos);
}

}  // namespace

Var VaeModel::decode_lstm(Tape& tape, Var z, std::span<const int> ids, Rng& rng) const {
  std::vector<int> inputs, targets;
  shifted(ids, inputs, targets);
  Var emb = ag::dropout(dec_embed_(tape, inputs), spec_.dropout, rng);
  std::vector<Var> zs(inputs.size(), z);
  const std::array<Var, 2> parts = {emb, ag::vstack(zs)};
  Var x = ag::hconcat(parts);
  Lstm::State init{dec_init_h_(tape, z), dec_init_c_(tape, z)};
  Var hidden = ag::vstack(dec_lstm_.run(tape, x, init));
  return ag::scale(ag::nll_rows(output_logits(tape, hidden), targets), -1.0);
}

Var VaeModel::decode_xfmr(Tape& tape, Var z, std::span<const int> ids, Rng& rng) const {
  std::vector<int> inputs, targets;
  shifted(ids, inputs, targets);
  std::vector<int> pos(inputs.size());
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<int>(i);
  const std::size_t D = spec_.dec_dim;
  // h'_emb = h_emb + W_D z on every position.
  Var x = ag::add(dec_embed_(tape, inputs), ag::embedding(tape.param(*dec_positions_), pos));
  x = ag::add_row(x, ag::matvec(tape.param(*w_embed_shift_), z));
  x = ag::dropout(x, spec_.dropout, rng);
  // h_mem = W_m z, one D-wide memory slot per layer.
  Var memory = ag::reshape(ag::matvec(tape.param(*w_memory_), z), Shape{spec_.dec_layers, D});
  for (std::size_t l = 0; l < dec_blocks_.size(); ++l) {
    x = dec_blocks_[l](tape, x, /*causal=*/true, ag::row(memory, l));
  }
  x = dec_ln_(tape, x);
  return ag::scale(ag::nll_rows(output_logits(tape, x), targets), -1.0);
}

Var VaeModel::label_log_probs(Tape& tape, Var z) const { return ag::log_softmax(classifier_(tape, z)); }

double VaeModel::current_beta() const {
  if (spec_.beta_schedule == BetaSchedule::fixed || spec_.beta_warmup == 0) return spec_.beta;
  const double ramp = std::min(1.0, static_cast<double>(step_) / static_cast<double>(spec_.beta_warmup));
  return spec_.beta * ramp;
}

LossParts VaeModel::elbo_loss(Tape& tape, const Example& ex, std::span<const double> eps, Rng& rng) const {
  LatentGaussian q = posterior(tape, ex.ids, rng);
  Var z = reparameterize(tape, q, eps);
  Var log_px = decode(tape, z, ex.ids, rng);
  Var kl = kl_to_standard_normal(q);
  LossParts parts;
  parts.reconstruction = -log_px.item();
  parts.kl = kl.item();
  Var total = ag::add(ag::scale(log_px, -1.0), ag::scale(kl, current_beta()));
  if (ex.label >= 0) {
    Var log_py = ag::pick(label_log_probs(tape, z), static_cast<std::size_t>(ex.label));
    parts.classification = -log_py.item();
    total = ag::add(total, ag::scale(log_py, -spec_.cls_weight));
  }
  parts.total = total;
  return parts;
}

LabelProbs VaeModel::classify_map(std::span<const int> ids) const {
  Tape tape(Tape::Mode::inference);
  Rng unused(0);
  LatentGaussian q = posterior(tape, ids, unused);
  const Tensor& logits = classifier_(tape, q.mu).value();
  const std::vector<double> p = num::softmax(logits.data());
  LabelProbs out{};
  std::copy(p.begin(), p.end(), out.begin());
  return out;
}

std::vector<double> VaeModel::posterior_mean(std::span<const int> ids) const {
  Tape tape(Tape::Mode::inference);
  Rng unused(0);
  const Tensor& mu = posterior(tape, ids, unused).mu.value();
  return mu.values();
}

LossParts VaeModel::loss(Tape& tape, std::span<const Example> unit, Rng& rng) {
  LossParts sum;
  sum.classification = sum.reconstruction = sum.kl = 0.0;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> eps(spec_.latent_dim);
  for (const Example& ex : unit) {
    for (double& e : eps) e = normal(rng);
    LossParts one = elbo_loss(tape, ex, eps, rng);
    sum.total = sum.total.valid() ? ag::add(sum.total, one.total) : one.total;
    if (ex.label >= 0) sum.classification += one.classification;
    sum.reconstruction += one.reconstruction;
    sum.kl += one.kl;
  }
  return sum;
}

std::vector<LabelProbs> VaeModel::predict(std::span<const Example> unit) const {
  std::vector<LabelProbs> out;
  out.reserve(unit.size());
  for (const Example& ex : unit) out.push_back(classify_map(ex.ids));
  return out;
}

std::vector<LatentRow> export_latents(const VaeModel& model, std::span<const Clause> clauses, const Vocab& vocab) {
  std::vector<LatentRow> rows;
  rows.reserve(clauses.size());
  for (const Clause& c : clauses) {
    rows.push_back({c.doc_id, c.par_id, c.clause_idx, c.label, c.genre, model.posterior_mean(vocab.encode(c.tokens))});
  }
  return rows;
}

void write_latents_tsv(std::ostream& out, std::span<const LatentRow> rows) {
  const std::size_t P = rows.empty() ? 0 : rows.front().mu.size();
  out << "doc_id\tpar_id\tclause_idx\tlabel\tgenre";
  for (std::size_t i = 0; i < P; ++i) out << "\tmu_" << i;
  out << '\n';
  char buf[40];
  for (const LatentRow& r : rows) {
    out << r.doc_id << '\t' << r.par_id << '\t' << r.clause_idx << '\t' << label_name(r.label) << '\t' << r.genre;
    for (double v : r.mu) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << '\t' << buf;
    }
    out << '\n';
  }
}

}  // namespace sevae
