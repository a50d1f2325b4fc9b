#include "sevae/verify.hpp"

#include <chrono>

namespace sevae {
namespace {

std::string objective_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::disc: return "discriminative cross-entropy";
    case ModelKind::gen: return "class-LM joint likelihood";
    case ModelKind::lat: return "latent marginal (C=3)";
    case ModelKind::ctx: return "context-aware cross-entropy";
    case ModelKind::vae_bow: return "ELBO, bow decoder";
    case ModelKind::vae_lstm: return "ELBO, lstm decoder";
    case ModelKind::vae_xfmr: return "ELBO, xfmr-latent decoder";
  }
  return "?";
}

}  // namespace

ModelSpec gradcheck_spec(ModelKind kind) {
  ModelSpec s = ModelSpec::defaults_for(kind);
  s.vocab_size = 12;
  s.max_len = 10;
  s.embed_dim = 5;
  s.hidden_dim = 4;
  s.label_dim = 3;
  s.latent_classes = 3;
  s.latent_class_dim = 3;
  s.ctx_word_hidden = 4;
  s.ctx_clause_hidden = 3;
  s.enc_dim = 8;
  s.enc_layers = 1;
  s.enc_heads = 2;
  s.enc_ffn = 8;
  s.latent_dim = 3;
  s.dec_dim = 8;
  s.dec_layers = 2;
  s.dec_heads = 2;
  s.dec_ffn = 8;
  return s;
}

std::vector<GradSuiteRow> run_gradient_suite(std::span<const std::uint64_t> seeds, const GradCheckOptions& options) {
  const std::vector<ModelKind> order = {ModelKind::vae_bow, ModelKind::vae_lstm, ModelKind::vae_xfmr, ModelKind::gen,
                                        ModelKind::lat,     ModelKind::disc,     ModelKind::ctx};
  const LabelProbs prior = {0.1, 0.1, 0.1, 0.1, 0.4, 0.1, 0.1};
  std::vector<GradSuiteRow> rows;
  for (ModelKind kind : order) {
    for (std::uint64_t seed : seeds) {
      const auto start = std::chrono::steady_clock::now();
      auto model = make_model(gradcheck_spec(kind), seed, prior);
      const std::vector<Example> unit = kind == ModelKind::ctx
                                            ? std::vector<Example>{{{5, 6}, 0}, {{7}, 3}, {{8, 9}, 6}}
                                            : std::vector<Example>{{{5, 9, 6, 11}, static_cast<int>(seed % kNumLabels)}};
      // The noise stream restarts on every evaluation, so the objective is a
      // fixed function of the parameters.
      auto objective = [&](Tape& tape) {
        Rng rng(seed);
        return model->loss(tape, unit, rng).total;
      };
      const auto params = model->params().trainable();
      GradCheckOptions opt = options;
      opt.seed = seed;
      const GradCheckReport rep = grad_check(objective, params, opt);
      GradSuiteRow row;
      row.objective = objective_name(kind);
      row.seed = seed;
      row.params = params.size();
      row.max_rel_error = rep.max_rel_error;
      row.tolerance = rep.tolerance;
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace sevae
