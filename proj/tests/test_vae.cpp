#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "sevae/error.hpp"
#include "sevae/gradcheck.hpp"
#include "sevae/vae.hpp"

using namespace sevae;

namespace {

ModelSpec small_vae(ModelKind kind, std::size_t latent = 3) {
  ModelSpec s = ModelSpec::defaults_for(kind);
  s.vocab_size = 12;
  s.max_len = 8;
  s.enc_dim = 8;
  s.enc_layers = 1;
  s.enc_heads = 2;
  s.enc_ffn = 8;
  s.latent_dim = latent;
  s.dec_dim = 8;
  s.dec_layers = 2;
  s.dec_heads = 2;
  s.dec_ffn = 8;
  return s;
}

const ModelKind kVaes[] = {ModelKind::vae_bow, ModelKind::vae_lstm, ModelKind::vae_xfmr};

LatentGaussian gaussian(Tape& tape, std::vector<double> mu, std::vector<double> logvar) {
  return {tape.constant(Tensor::vector(std::move(mu))), tape.constant(Tensor::vector(std::move(logvar)))};
}

void zero(Parameter& p) { p.value().fill(0.0); }

}  // namespace

TEST_CASE("reparameterize is mu at eps = 0 and mu + sigma * eps otherwise") {
  Tape tape;
  auto q = gaussian(tape, {0.5, -1.0}, {0.0, std::log(4.0)});
  CHECK(VaeModel::reparameterize(tape, q, std::vector<double>{0.0, 0.0}).value().values() ==
        std::vector<double>{0.5, -1.0});
  const auto z = VaeModel::reparameterize(tape, q, std::vector<double>{1.0, -1.0}).value();
  CHECK(z[0] == doctest::Approx(1.5));
  CHECK(z[1] == doctest::Approx(-3.0));
  CHECK_THROWS_AS(VaeModel::reparameterize(tape, q, std::vector<double>{1.0}), UsageError);
}

TEST_CASE("closed-form KL on hand-derived values") {
  Tape tape;
  CHECK(VaeModel::kl_to_standard_normal(gaussian(tape, {0.0, 0.0}, {0.0, 0.0})).item() == 0.0);
  CHECK(VaeModel::kl_to_standard_normal(gaussian(tape, {1.0, 2.0}, {0.0, 0.0})).item() == 2.5);
  CHECK(VaeModel::kl_to_standard_normal(gaussian(tape, {0.0}, {std::log(2.0)})).item() ==
        doctest::Approx(0.5 * (1.0 - std::log(2.0))).epsilon(1e-15));
}

TEST_CASE("decoder kinds map from model kinds") {
  CHECK(decoder_kind_for(ModelKind::vae_bow) == DecoderKind::bow);
  CHECK(decoder_kind_for(ModelKind::vae_lstm) == DecoderKind::lstm);
  CHECK(decoder_kind_for(ModelKind::vae_xfmr) == DecoderKind::xfmr_latent);
  CHECK_THROWS_AS(decoder_kind_for(ModelKind::disc), UsageError);
}

TEST_CASE("zeroed output layers give uniform likelihoods and classifier") {
  const std::vector<int> ids = {5, 6, 7, 8};
  for (ModelKind kind : kVaes) {
    CAPTURE(model_kind_name(kind));
    VaeModel m(small_vae(kind), 2);
    zero(m.decoder_output_weight());
    if (Parameter* b = m.decoder_output_bias()) zero(*b);
    zero(*m.classifier().weight);
    zero(*m.classifier().bias);
    Tape tape(Tape::Mode::inference);
    Rng rng(0);
    Var z = tape.constant(Tensor::vector({0.3, -0.2, 1.0}));
    const double per_step = std::log(1.0 / 12.0);
    const double steps = kind == ModelKind::vae_bow ? 4.0 : 5.0;  // autoregressive decoders also score EOS
    CHECK(m.decode(tape, z, ids, rng).item() == doctest::Approx(steps * per_step).epsilon(1e-12));
    for (double p : m.classify_map(ids)) CHECK(p == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
    Var ce = ag::scale(ag::pick(m.label_log_probs(tape, z), 3), -1.0);
    CHECK(ce.item() == doctest::Approx(std::log(7.0)).epsilon(1e-15));
  }
}

TEST_CASE("latent injection drives the transformer decoder") {
  VaeModel m(small_vae(ModelKind::vae_xfmr), 9);
  const std::vector<int> ids = {5, 7, 9};
  auto loglik = [&](std::vector<double> z) {
    Tape tape(Tape::Mode::inference);
    Rng rng(0);
    return m.decode(tape, tape.constant(Tensor::vector(std::move(z))), ids, rng).item();
  };
  CHECK(loglik({0.0, 0.0, 0.0}) != loglik({1.0, -2.0, 0.5}));
  zero(m.memory_projection());
  zero(m.embedding_projection());
  CHECK(loglik({0.0, 0.0, 0.0}) == loglik({1.0, -2.0, 0.5}));
  CHECK(m.memory_projection().value().shape() == Shape{2 * 8, 3});
  CHECK(m.embedding_projection().value().shape() == Shape{8, 3});
}

TEST_CASE("MAP classification uses the posterior mean and is deterministic") {
  VaeModel m(small_vae(ModelKind::vae_lstm), 4);
  const std::vector<int> ids = {5, 6};
  const LabelProbs a = m.classify_map(ids);
  CHECK(a == m.classify_map(ids));
  double sum = 0.0;
  for (double p : a) sum += p;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  Tape tape(Tape::Mode::inference);
  Rng rng(0);
  Var mu = m.posterior(tape, ids, rng).mu;
  const auto expected = num::softmax(m.classifier()(tape, mu).value().data());
  for (std::size_t y = 0; y < kNumLabels; ++y) CHECK(a[y] == expected[y]);
  CHECK(m.posterior_mean(ids) == mu.value().values());
}

TEST_CASE("log-variance is clamped") {
  ModelSpec s = small_vae(ModelKind::vae_bow);
  s.logvar_min = -0.01;
  s.logvar_max = 0.01;
  VaeModel m(s, 1);
  m.logvar_head().bias->value().fill(50.0);
  Tape tape(Tape::Mode::inference);
  Rng rng(0);
  for (double v : m.posterior(tape, std::vector<int>{5}, rng).logvar.value().values()) CHECK(v == 0.01);
}

TEST_CASE("beta schedules") {
  ModelSpec s = small_vae(ModelKind::vae_bow);
  VaeModel fixed(s, 1);
  fixed.set_step(10);
  CHECK(fixed.current_beta() == 0.5);
  s.beta_schedule = BetaSchedule::linear;
  s.beta_warmup = 100;
  VaeModel lin(s, 1);
  lin.set_step(0);
  CHECK(lin.current_beta() == 0.0);
  lin.set_step(50);
  CHECK(lin.current_beta() == doctest::Approx(0.25));
  lin.set_step(500);
  CHECK(lin.current_beta() == 0.5);
}

TEST_CASE("ELBO components and gradients") {
  for (ModelKind kind : kVaes) {
    for (std::uint64_t seed : {1, 2, 3}) {
      CAPTURE(model_kind_name(kind));
      CAPTURE(seed);
      VaeModel m(small_vae(kind), seed);
      const Example ex{{5, 9, 6, 11}, 2};
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> n(0.0, 1.0);
      std::vector<double> eps(3);
      for (double& e : eps) e = n(rng);
      {
        Tape tape(Tape::Mode::inference);
        Rng r(0);
        const LossParts parts = m.elbo_loss(tape, ex, eps, r);
        CHECK(parts.total.item() ==
              doctest::Approx(parts.classification + parts.reconstruction + 0.5 * parts.kl).epsilon(1e-12));
        CHECK(parts.kl >= 0.0);
      }
      auto objective = [&](Tape& tape) {
        Rng r(0);
        return m.elbo_loss(tape, ex, eps, r).total;
      };
      const auto params = m.params().trainable();
      const GradCheckReport rep = grad_check(objective, params);
      CHECK_MESSAGE(rep.passed(), "max rel err " << rep.max_rel_error);
    }
  }
}

TEST_CASE("unlabeled examples drop the classification term") {
  VaeModel m(small_vae(ModelKind::vae_bow), 3);
  Tape tape(Tape::Mode::inference);
  Rng r(0);
  const LossParts parts = m.elbo_loss(tape, Example{{5, 6}, -1}, std::vector<double>{0.1, 0.2, 0.3}, r);
  CHECK(std::isnan(parts.classification));
  CHECK(parts.total.item() == doctest::Approx(parts.reconstruction + 0.5 * parts.kl));
}

TEST_CASE("with beta = 1 the expected ELBO lower-bounds an importance-sampled log p(x, y)") {
  ModelSpec s = small_vae(ModelKind::vae_lstm);
  s.beta = 1.0;
  VaeModel m(s, 8);
  const Example ex{{5, 6, 7}, 1};
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 1.0);
  double elbo = 0.0;
  const int samples = 512;
  std::vector<double> log_w;
  for (int i = 0; i < samples; ++i) {
    std::vector<double> eps(3);
    for (double& e : eps) e = n(rng);
    Tape tape(Tape::Mode::inference);
    Rng r(0);
    elbo += -m.elbo_loss(tape, ex, eps, r).total.item() / samples;
    const LatentGaussian q = m.posterior(tape, ex.ids, r);
    Var z = VaeModel::reparameterize(tape, q, eps);
    const double log_joint = m.decode(tape, z, ex.ids, r).item() + m.label_log_probs(tape, z).value()[1];
    double log_pz = 0.0, log_qz = 0.0;
    for (std::size_t d = 0; d < 3; ++d) {
      const double zd = z.value()[d];
      const double lv = q.logvar.value()[d];
      log_pz += -0.5 * (zd * zd + std::log(2.0 * M_PI));
      log_qz += -0.5 * (eps[d] * eps[d] + lv + std::log(2.0 * M_PI));
    }
    log_w.push_back(log_joint + log_pz - log_qz);
  }
  const double is_estimate = num::logsumexp(log_w) - std::log(static_cast<double>(samples));
  CHECK(elbo <= is_estimate + 0.1);
}

TEST_CASE("latent export table") {
  VaeModel m(small_vae(ModelKind::vae_bow, 2), 5);
  std::vector<Clause> cs(1);
  cs[0].text = "a b";
  cs[0].tokens = {"a", "b"};
  cs[0].label = SEType::report;
  cs[0].genre = "news";
  cs[0].doc_id = "doc";
  cs[0].par_id = 1;
  cs[0].clause_idx = 4;
  Vocab v = Vocab::build(cs, 1);
  ModelSpec s = small_vae(ModelKind::vae_bow, 2);
  s.vocab_size = v.size();
  VaeModel mv(s, 5);
  const auto rows = export_latents(mv, cs, v);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].mu == mv.posterior_mean(v.encode(cs[0].tokens)));
  std::ostringstream out;
  write_latents_tsv(out, rows);
  const std::string text = out.str();
  CHECK(text.rfind("doc_id\tpar_id\tclause_idx\tlabel\tgenre\tmu_0\tmu_1\n", 0) == 0);
  CHECK(text.find("doc\t1\t4\tREPORT\tnews\t") != std::string::npos);
}
