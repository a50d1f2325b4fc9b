#include "sevae/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "sevae/error.hpp"

namespace sevae {
namespace {

void check_label(int label) {
  if (label < 0 || label >= static_cast<int>(kNumLabels)) {
    throw UsageError("label code " + std::to_string(label) + " outside [0, 7)");
  }
}

void check_ids(std::span<const int> ids, const ModelSpec& spec) {
  if (ids.empty()) throw DataError("cannot score an empty token sequence");
  if (ids.size() > spec.max_len) {
    throw DataError("sequence of " + std::to_string(ids.size()) + " tokens exceeds max_len " +
                    std::to_string(spec.max_len));
  }
}

// BOS + ids as inputs, ids + EOS as targets.
void shifted(std::span<const int> ids, std::vector<int>& inputs, std::vector<int>& targets) {
  inputs.assign(1, Vocab::kBos);
  inputs.insert(inputs.end(), ids.begin(), ids.end());
  targets.assign(ids.begin(), ids.end());
  targets.push_back(Vocab::kEos);
}

LabelProbs probs_from_scores(const std::array<double, kNumLabels>& scores) {
  const std::vector<double> p = num::softmax(scores);
  LabelProbs out{};
  std::copy(p.begin(), p.end(), out.begin());
  return out;
}

int argmax_label(const std::array<double, kNumLabels>& scores) {
  return static_cast<int>(num::argmax(scores));
}

Tensor log_prior_tensor(const LabelProbs& prior) {
  Tensor t(Shape{kNumLabels});
  for (std::size_t y = 0; y < kNumLabels; ++y) {
    if (!(prior[y] > 0.0)) throw UsageError("label prior must be strictly positive");
    t[y] = std::log(prior[y]);
  }
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------

DiscriminativeModel::DiscriminativeModel(const ModelSpec& spec, std::uint64_t seed) : Model(spec) {
  Rng rng(seed);
  embed_ = Embedding(params_, "embed", spec_.vocab_size, spec_.embed_dim, rng);
  lstm_ = Lstm(params_, "lstm", spec_.embed_dim, spec_.hidden_dim, rng);
  out_ = Linear(params_, "out", spec_.hidden_dim, kNumLabels, rng);
}

Var DiscriminativeModel::logits(Tape& tape, std::span<const int> ids, Rng& rng) const {
  check_ids(ids, spec_);
  Var x = ag::dropout(embed_(tape, ids), spec_.dropout, rng);
  Var pooled = ag::mean_rows(ag::vstack(lstm_.run(tape, x)));
  return out_(tape, ag::dropout(pooled, spec_.dropout, rng));
}

LossParts DiscriminativeModel::loss(Tape& tape, std::span<const Example> unit, Rng& rng) {
  LossParts parts;
  parts.classification = 0.0;
  for (const Example& ex : unit) {
    check_label(ex.label);
    Var ce = ag::cross_entropy(logits(tape, ex.ids, rng), static_cast<std::size_t>(ex.label));
    parts.classification += ce.item();
    parts.total = parts.total.valid() ? ag::add(parts.total, ce) : ce;
  }
  return parts;
}

std::vector<LabelProbs> DiscriminativeModel::predict(std::span<const Example> unit) const {
  std::vector<LabelProbs> out;
  for (const Example& ex : unit) {
    Tape tape(Tape::Mode::inference);
    Rng unused(0);
    const std::vector<double> p = num::softmax(logits(tape, ex.ids, unused).value().data());
    LabelProbs probs{};
    std::copy(p.begin(), p.end(), probs.begin());
    out.push_back(probs);
  }
  return out;
}

// ---------------------------------------------------------------------------

ClassLmModel::ClassLmModel(const ModelSpec& spec, std::uint64_t seed, const LabelProbs& prior) : Model(spec) {
  Rng rng(seed);
  const std::size_t V = spec_.vocab_size;
  embed_ = Embedding(params_, "embed", V, spec_.embed_dim, rng);
  label_embed_ = &params_.add("label_embed", uniform_init(Shape{kNumLabels, spec_.label_dim}, 0.1, rng));
  const std::size_t lstm_in = spec_.embed_dim + (spec_.feed_label_input ? spec_.label_dim : 0);
  lstm_ = Lstm(params_, "lstm", lstm_in, spec_.hidden_dim, rng);
  out_hidden_ = &params_.add("out.hidden", xavier_uniform(V, spec_.hidden_dim, rng));
  out_label_ = &params_.add("out.label", xavier_uniform(V, spec_.label_dim, rng));
  out_bias_ = &params_.add("out.bias", Tensor(Shape{V}));
  log_prior_ = &params_.add("label_log_prior", log_prior_tensor(prior), /*trainable=*/false);
}

Var ClassLmModel::hidden_rows(Tape& tape, std::span<const int> inputs, int label, Rng& rng) const {
  Var x = embed_(tape, inputs);
  if (spec_.feed_label_input) {
    Var v_y = ag::row(tape.param(*label_embed_), static_cast<std::size_t>(label));
    std::vector<Var> rows(inputs.size(), v_y);
    const std::array<Var, 2> parts = {x, ag::vstack(rows)};
    x = ag::hconcat(parts);
  }
  x = ag::dropout(x, spec_.dropout, rng);
  return ag::dropout(ag::vstack(lstm_.run(tape, x)), spec_.dropout, rng);
}

Var ClassLmModel::log_likelihood(Tape& tape, std::span<const int> ids, int label, Rng& rng) const {
  check_ids(ids, spec_);
  check_label(label);
  std::vector<int> inputs, targets;
  shifted(ids, inputs, targets);
  Var hidden = hidden_rows(tape, inputs, label, rng);
  Var v_y = ag::row(tape.param(*label_embed_), static_cast<std::size_t>(label));
  Var offset = ag::add(ag::matvec(tape.param(*out_label_), v_y), tape.param(*out_bias_));
  Var logits = ag::add_row(ag::matmul_nt(hidden, tape.param(*out_hidden_)), offset);
  return ag::scale(ag::nll_rows(logits, targets), -1.0);
}

std::array<double, kNumLabels> ClassLmModel::joint_scores(std::span<const int> ids) const {
  check_ids(ids, spec_);
  std::vector<int> inputs, targets;
  shifted(ids, inputs, targets);
  Tape tape(Tape::Mode::inference);
  Rng unused(0);
  Var labels = tape.param(*label_embed_);
  Var u_y = tape.param(*out_label_);
  Var bias = tape.param(*out_bias_);
  // Without label input the LSTM states are shared by every label.
  Var shared;
  if (!spec_.feed_label_input) shared = ag::matmul_nt(hidden_rows(tape, inputs, 0, unused), tape.param(*out_hidden_));
  std::array<double, kNumLabels> scores{};
  for (std::size_t y = 0; y < kNumLabels; ++y) {
    Var a = spec_.feed_label_input
                ? ag::matmul_nt(hidden_rows(tape, inputs, static_cast<int>(y), unused), tape.param(*out_hidden_))
                : shared;
    Var offset = ag::add(ag::matvec(u_y, ag::row(labels, y)), bias);
    scores[y] = -ag::nll_rows(ag::add_row(a, offset), targets).item() + log_prior_->value()[y];
  }
  return scores;
}

int ClassLmModel::predict_label(std::span<const int> ids) const { return argmax_label(joint_scores(ids)); }

LossParts ClassLmModel::loss(Tape& tape, std::span<const Example> unit, Rng& rng) {
  LossParts parts;
  parts.reconstruction = 0.0;
  parts.classification = 0.0;
  for (const Example& ex : unit) {
    Var ll = log_likelihood(tape, ex.ids, ex.label, rng);
    const double log_py = log_prior_->value()[static_cast<std::size_t>(ex.label)];
    Var nll = ag::add_scalar(ag::scale(ll, -1.0), -log_py);
    parts.reconstruction += -ll.item();
    parts.classification += -log_py;
    parts.total = parts.total.valid() ? ag::add(parts.total, nll) : nll;
  }
  return parts;
}

std::vector<LabelProbs> ClassLmModel::predict(std::span<const Example> unit) const {
  std::vector<LabelProbs> out;
  for (const Example& ex : unit) out.push_back(probs_from_scores(joint_scores(ex.ids)));
  return out;
}

// ---------------------------------------------------------------------------

LatentClassLmModel::LatentClassLmModel(const ModelSpec& spec, std::uint64_t seed, const LabelProbs& prior)
    : ClassLmModel(spec, seed, prior) {
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const std::size_t C = spec_.latent_classes;
  const std::size_t D = spec_.latent_class_dim;
  latent_embed_ = &params_.add("latent_embed", uniform_init(Shape{C, D}, 0.1, rng));
  prior_weight_ = &params_.add("latent_prior.weight", uniform_init(Shape{C, D}, 0.1, rng));
  prior_bias_ = &params_.add("latent_prior.bias", Tensor(Shape{C}));
  out_latent_ = &params_.add("out.latent", xavier_uniform(spec_.vocab_size, D, rng));
}

Var LatentClassLmModel::latent_log_prior(Tape& tape) const {
  const std::size_t C = spec_.latent_classes;
  const std::size_t D = spec_.latent_class_dim;
  // score_c = w_c . v_c + b_c
  Var products = ag::mul(tape.param(*prior_weight_), tape.param(*latent_embed_));
  Var dots = ag::reshape(ag::matmul(products, tape.constant(Tensor(Shape{D, 1}, 1.0))), Shape{C});
  return ag::log_softmax(ag::add(dots, tape.param(*prior_bias_)));
}

std::vector<double> LatentClassLmModel::latent_prior() const {
  Tape tape(Tape::Mode::inference);
  const Tensor& lp = latent_log_prior(tape).value();
  std::vector<double> p(lp.size());
  for (std::size_t c = 0; c < p.size(); ++c) p[c] = std::exp(lp[c]);
  return p;
}

std::vector<Var> LatentClassLmModel::label_rows(Tape& tape, std::span<const int> ids, std::span<const int> labels,
                                                Rng& rng) const {
  check_ids(ids, spec_);
  std::vector<int> inputs, targets;
  shifted(ids, inputs, targets);
  Var u_h = tape.param(*out_hidden_);
  Var u_y = tape.param(*out_label_);
  Var bias = tape.param(*out_bias_);
  Var latent_offsets = ag::matmul_nt(tape.param(*latent_embed_), tape.param(*out_latent_));  // C x V
  Var shared;
  if (!spec_.feed_label_input) shared = ag::matmul_nt(hidden_rows(tape, inputs, 0, rng), u_h);
  std::vector<Var> out;
  for (int y : labels) {
    check_label(y);
    Var a = spec_.feed_label_input ? ag::matmul_nt(hidden_rows(tape, inputs, y, rng), u_h) : shared;
    Var label_offset =
        ag::add(ag::matvec(u_y, ag::row(tape.param(*label_embed_), static_cast<std::size_t>(y))), bias);
    std::vector<Var> per_c(spec_.latent_classes);
    for (std::size_t c = 0; c < per_c.size(); ++c) {
      Var logits = ag::add_row(a, ag::add(label_offset, ag::row(latent_offsets, c)));
      per_c[c] = ag::scale(ag::nll_rows(logits, targets), -1.0);
    }
    out.push_back(ag::concat(per_c));
  }
  return out;
}

Var LatentClassLmModel::conditional_log_likelihoods(Tape& tape, std::span<const int> ids, int label,
                                                    Rng& rng) const {
  const int labels[] = {label};
  return label_rows(tape, ids, labels, rng).front();
}

Var LatentClassLmModel::marginal_loss(Tape& tape, std::span<const int> ids, int label, Rng& rng) const {
  check_label(label);
  Var joint = ag::add(conditional_log_likelihoods(tape, ids, label, rng), latent_log_prior(tape));
  const double log_py = log_prior_->value()[static_cast<std::size_t>(label)];
  return ag::add_scalar(ag::scale(ag::logsumexp(joint), -1.0), -log_py);
}

std::vector<std::vector<double>> LatentClassLmModel::score_table(std::span<const int> ids) const {
  Tape tape(Tape::Mode::inference);
  Rng unused(0);
  const int labels[] = {0, 1, 2, 3, 4, 5, 6};
  std::vector<Var> rows = label_rows(tape, ids, labels, unused);
  const Tensor& log_pc = latent_log_prior(tape).value();
  std::vector<std::vector<double>> table(kNumLabels, std::vector<double>(spec_.latent_classes));
  for (std::size_t y = 0; y < kNumLabels; ++y) {
    for (std::size_t c = 0; c < spec_.latent_classes; ++c) table[y][c] = rows[y].value()[c] + log_pc[c];
  }
  return table;
}

std::array<double, kNumLabels> LatentClassLmModel::joint_scores(std::span<const int> ids) const {
  const auto table = score_table(ids);
  std::array<double, kNumLabels> scores{};
  for (std::size_t y = 0; y < kNumLabels; ++y) scores[y] = num::logsumexp(table[y]) + log_prior_->value()[y];
  return scores;
}

int LatentClassLmModel::predict_label(std::span<const int> ids) const { return argmax_label(joint_scores(ids)); }

LossParts LatentClassLmModel::loss(Tape& tape, std::span<const Example> unit, Rng& rng) {
  LossParts parts;
  parts.reconstruction = 0.0;
  parts.classification = 0.0;
  for (const Example& ex : unit) {
    Var nll = marginal_loss(tape, ex.ids, ex.label, rng);
    const double log_py = log_prior_->value()[static_cast<std::size_t>(ex.label)];
    parts.classification += -log_py;
    parts.reconstruction += nll.item() + log_py;
    parts.total = parts.total.valid() ? ag::add(parts.total, nll) : nll;
  }
  return parts;
}

std::vector<LabelProbs> LatentClassLmModel::predict(std::span<const Example> unit) const {
  std::vector<LabelProbs> out;
  for (const Example& ex : unit) out.push_back(probs_from_scores(joint_scores(ex.ids)));
  return out;
}

// ---------------------------------------------------------------------------

ContextAwareModel::ContextAwareModel(const ModelSpec& spec, std::uint64_t seed) : Model(spec) {
  Rng rng(seed);
  const std::size_t W = spec_.ctx_word_hidden;
  const std::size_t H = spec_.ctx_clause_hidden;
  embed_ = Embedding(params_, "embed", spec_.vocab_size, spec_.embed_dim, rng);
  word_fwd_ = Lstm(params_, "word.fwd", spec_.embed_dim, W, rng);
  word_bwd_ = Lstm(params_, "word.bwd", spec_.embed_dim, W, rng);
  clause_fwd_ = Lstm(params_, "clause.fwd", 2 * W, H, rng);
  clause_bwd_ = Lstm(params_, "clause.bwd", 2 * W, H, rng);
  out_ = Linear(params_, "out", 2 * H, kNumLabels, rng);
}

std::vector<Var> ContextAwareModel::forward(Tape& tape, std::span<const Example> paragraph, Rng& rng) const {
  if (paragraph.empty()) throw DataError("empty paragraph");
  std::vector<int> ids;
  std::vector<std::size_t> starts;
  for (const Example& ex : paragraph) {
    if (ex.ids.empty()) throw DataError("cannot encode an empty clause");
    starts.push_back(ids.size());
    ids.insert(ids.end(), ex.ids.begin(), ex.ids.end());
  }
  starts.push_back(ids.size());
  if (ids.size() > spec_.ctx_max_len) {
    throw DataError("paragraph of " + std::to_string(ids.size()) + " tokens exceeds ctx_max_len " +
                    std::to_string(spec_.ctx_max_len));
  }
  Var x = ag::dropout(embed_(tape, ids), spec_.dropout, rng);
  const std::vector<Var> fwd = word_fwd_.run(tape, x);
  const std::vector<Var> bwd = word_bwd_.run(tape, x, std::nullopt, /*reverse=*/true);

  std::vector<Var> clause_vecs;
  for (std::size_t i = 0; i + 1 < starts.size(); ++i) {
    const auto first = static_cast<std::ptrdiff_t>(starts[i]);
    const auto last = static_cast<std::ptrdiff_t>(starts[i + 1]);
    const std::vector<Var> f(fwd.begin() + first, fwd.begin() + last);
    const std::vector<Var> b(bwd.begin() + first, bwd.begin() + last);
    const std::array<Var, 2> both = {ag::vstack(f), ag::vstack(b)};
    clause_vecs.push_back(ag::max_rows(ag::hconcat(both)));
  }
  Var clauses = ag::dropout(ag::vstack(clause_vecs), spec_.dropout, rng);
  const std::vector<Var> cf = clause_fwd_.run(tape, clauses);
  const std::vector<Var> cb = clause_bwd_.run(tape, clauses, std::nullopt, /*reverse=*/true);
  std::vector<Var> logits;
  for (std::size_t i = 0; i < cf.size(); ++i) logits.push_back(out_(tape, ag::concat({cf[i], cb[i]})));
  return logits;
}

LossParts ContextAwareModel::loss(Tape& tape, std::span<const Example> unit, Rng& rng) {
  const std::vector<Var> logits = forward(tape, unit, rng);
  LossParts parts;
  parts.classification = 0.0;
  for (std::size_t i = 0; i < unit.size(); ++i) {
    check_label(unit[i].label);
    Var ce = ag::cross_entropy(logits[i], static_cast<std::size_t>(unit[i].label));
    parts.classification += ce.item();
    parts.total = parts.total.valid() ? ag::add(parts.total, ce) : ce;
  }
  return parts;
}

std::vector<LabelProbs> ContextAwareModel::predict(std::span<const Example> unit) const {
  Tape tape(Tape::Mode::inference);
  Rng unused(0);
  std::vector<LabelProbs> out;
  for (Var l : forward(tape, unit, unused)) {
    const std::vector<double> p = num::softmax(l.value().data());
    LabelProbs probs{};
    std::copy(p.begin(), p.end(), probs.begin());
    out.push_back(probs);
  }
  return out;
}

}  // namespace sevae
