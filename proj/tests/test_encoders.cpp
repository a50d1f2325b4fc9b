#include <random>

#include "doctest.h"
#include "sevae/encoders.hpp"
#include "sevae/error.hpp"
#include "sevae/gradcheck.hpp"
#include "sevae/text.hpp"

using namespace sevae;

namespace {

EncoderConfig small(EncoderKind kind) {
  EncoderConfig c;
  c.kind = kind;
  c.vocab_size = 11;
  c.embed_dim = 6;
  c.hidden_dim = 5;
  c.layers = 2;
  c.heads = 2;
  c.ffn_dim = 7;
  c.max_len = 6;
  return c;
}

const EncoderKind kAll[] = {EncoderKind::lstm_pool, EncoderKind::bilstm_pool, EncoderKind::transformer_cls};

}  // namespace

TEST_CASE("encoder names round-trip") {
  for (EncoderKind k : kAll) CHECK(parse_encoder_kind(encoder_kind_name(k)) == k);
  CHECK(encoder_kind_name(EncoderKind::transformer_cls) == "mini-transformer-cls");
  CHECK_THROWS_AS(parse_encoder_kind("bert"), UsageError);
}

TEST_CASE("pooled outputs have the advertised width and are deterministic") {
  for (EncoderKind k : kAll) {
    CAPTURE(encoder_kind_name(k));
    ParamStore store;
    Rng rng(3);
    auto enc = make_encoder(store, "enc", small(k), rng);
    const std::size_t expected = k == EncoderKind::lstm_pool ? 5 : k == EncoderKind::bilstm_pool ? 10 : 6;
    CHECK(enc->output_dim() == expected);
    const int ids[] = {5, 6, 7};
    Tape t1(Tape::Mode::inference), t2(Tape::Mode::inference);
    Var a = enc->encode_pooled(t1, ids, rng);
    Var b = enc->encode_pooled(t2, ids, rng);
    CHECK(a.shape() == Shape{expected});
    CHECK(a.value() == b.value());
  }
}

TEST_CASE("encoders reject empty, over-length, and out-of-vocabulary input") {
  for (EncoderKind k : kAll) {
    ParamStore store;
    Rng rng(1);
    auto enc = make_encoder(store, "enc", small(k), rng);
    Tape tape;
    CHECK_THROWS_AS(enc->encode_pooled(tape, std::vector<int>{}, rng), DataError);
    CHECK_THROWS_WITH_AS(enc->encode_pooled(tape, std::vector<int>(7, 5), rng), doctest::Contains("max_len"), DataError);
    CHECK_THROWS_AS(enc->encode_pooled(tape, std::vector<int>{5, 11}, rng), UsageError);
  }
}

TEST_CASE("bidirectional states see both directions") {
  ParamStore store;
  Rng rng(4);
  BiLstmEncoder enc(store, "enc", small(EncoderKind::bilstm_pool), rng);
  Tape tape(Tape::Mode::inference);
  auto a = enc.encode_sequence(tape, std::vector<int>{5, 6, 7}, rng);
  auto b = enc.encode_sequence(tape, std::vector<int>{5, 6, 8}, rng);
  REQUIRE(a.size() == 3);
  // First token's backward half depends on the last token.
  bool differs = false;
  for (std::size_t i = 5; i < 10; ++i) differs |= a[0].value()[i] != b[0].value()[i];
  CHECK(differs);
  for (std::size_t i = 0; i < 5; ++i) CHECK(a[0].value()[i] == b[0].value()[i]);
}

TEST_CASE("the CLS representation attends to every token") {
  ParamStore store;
  Rng rng(5);
  TransformerClsEncoder enc(store, "enc", small(EncoderKind::transformer_cls), rng);
  Tape tape(Tape::Mode::inference);
  Var a = enc.encode_pooled(tape, std::vector<int>{5, 6, 7}, rng);
  Var b = enc.encode_pooled(tape, std::vector<int>{5, 6, 9}, rng);
  CHECK(a.value() != b.value());
}

TEST_CASE("encoder gradients match finite differences") {
  for (EncoderKind k : kAll) {
    CAPTURE(encoder_kind_name(k));
    ParamStore store;
    Rng rng(6);
    auto enc = make_encoder(store, "enc", small(k), rng);
    const std::vector<int> ids = {5, 9, 6, 5};
    auto objective = [&](Tape& tape) {
      Rng r(0);
      Var h = enc->encode_pooled(tape, ids, r);
      return ag::sum(ag::mul(h, h));
    };
    const auto params = store.all();
    const GradCheckReport rep = grad_check(objective, params);
    CHECK_MESSAGE(rep.passed(), "max rel err " << rep.max_rel_error);
  }
}
