#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "doctest.h"
#include "sevae/autograd.hpp"
#include "sevae/error.hpp"
#include "sevae/gradcheck.hpp"

using namespace sevae;

namespace {

Parameter random_param(const std::string& name, Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double& x : t.data()) x = u(rng);
  return Parameter(name, t);
}

// Checks one op family on random inputs: the objective maps op output to a
// scalar through a fixed random projection so every output entry matters.
void check_op(const char* label, std::vector<Shape> shapes, const std::function<Var(Tape&, std::vector<Var>&)>& op,
              double lo = -1.0, double hi = 1.0) {
  CAPTURE(label);
  for (std::uint64_t seed : {1, 2, 3}) {
    std::mt19937_64 rng(seed);
    std::vector<Parameter> params;
    for (std::size_t i = 0; i < shapes.size(); ++i) params.push_back(random_param("p" + std::to_string(i), shapes[i], rng, lo, hi));
    std::vector<Parameter*> ptrs;
    for (auto& p : params) ptrs.push_back(&p);
    std::vector<double> proj;
    auto objective = [&](Tape& tape) {
      std::vector<Var> vars;
      for (auto& p : params) vars.push_back(tape.param(p));
      Var out = op(tape, vars);
      if (proj.size() != out.size()) {
        std::mt19937_64 prng(99);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        proj.resize(out.size());
        for (double& x : proj) x = u(prng);
      }
      Var w = tape.constant(Tensor(out.shape(), proj));
      return ag::sum(ag::mul(out, w));
    };
    const GradCheckReport r = grad_check(objective, ptrs);
    CHECK_MESSAGE(r.passed(), label << " seed " << seed << " max rel err " << r.max_rel_error);
  }
}

}  // namespace

TEST_CASE("forward values of elementary ops") {
  Tape tape;
  Var a = tape.constant(Tensor::vector({1.0, 2.0, 3.0}));
  Var b = tape.constant(Tensor::vector({4.0, 5.0, 6.0}));
  CHECK(ag::add(a, b).value().values() == std::vector<double>{5, 7, 9});
  CHECK(ag::sub(a, b).value().values() == std::vector<double>{-3, -3, -3});
  CHECK(ag::mul(a, b).value().values() == std::vector<double>{4, 10, 18});
  CHECK(ag::sum(a).item() == 6.0);
  CHECK(ag::max(b).item() == 6.0);
  Var m = tape.constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  CHECK(ag::matvec(m, a).value().values() == std::vector<double>{14, 32});
  Var mm = ag::matmul(m, tape.constant(Tensor::matrix(3, 1, {1, 1, 1})));
  CHECK(mm.value().values() == std::vector<double>{6, 15});
  CHECK(ag::matmul_nt(m, m).value().values() == std::vector<double>{14, 32, 32, 77});
  CHECK(ag::mean_rows(m).value().values() == std::vector<double>{2.5, 3.5, 4.5});
  CHECK(ag::max_rows(m).value().values() == std::vector<double>{4, 5, 6});
  CHECK(ag::cross_entropy(tape.constant(Tensor(Shape{7})), 3).item() == doctest::Approx(std::log(7.0)).epsilon(1e-15));
}

TEST_CASE("backward of sum(x*x) is 2x and parameters accumulate") {
  Parameter p("x", Tensor::vector({1.0, -2.0, 0.5}));
  Tape tape;
  Var x = tape.param(p);
  tape.backward(ag::sum(ag::mul(x, x)));
  CHECK(p.grad().values() == std::vector<double>{2.0, -4.0, 1.0});
  Tape again;
  Var y = again.param(p);
  again.backward(ag::sum(y));
  CHECK(p.grad().values() == std::vector<double>{3.0, -3.0, 2.0});
}

TEST_CASE("reused node receives both gradient contributions") {
  Parameter p("x", Tensor::scalar(3.0));
  Tape tape;
  Var x = tape.param(p);
  Var y = ag::add(ag::mul(x, x), ag::scale(x, 2.0));  // x^2 + 2x
  tape.backward(y);
  CHECK(p.grad().item() == 8.0);
}

TEST_CASE("inference tapes and frozen parameters leave gradients untouched") {
  Parameter p("x", Tensor::scalar(3.0));
  Parameter frozen("f", Tensor::scalar(2.0), false);
  {
    Tape tape;
    tape.backward(ag::mul(tape.param(p), tape.param(frozen)));
  }
  CHECK(p.grad().item() == 2.0);
  CHECK(frozen.grad().item() == 0.0);
  p.zero_grad();
  {
    Tape tape(Tape::Mode::inference);
    Var y = ag::mul(tape.param(p), tape.param(p));
    CHECK(!tape.needs_grad(y));
    tape.backward(y);
  }
  CHECK(p.grad().item() == 0.0);
}

TEST_CASE("tape misuse is reported") {
  Tape tape;
  Var v = tape.constant(Tensor::vector({1.0, 2.0}));
  CHECK_THROWS_WITH_AS(tape.backward(v), doctest::Contains("scalar"), NumericalError);
  Tape other;
  Var s = ag::sum(v);
  CHECK_THROWS_WITH_AS(other.backward(s), doctest::Contains("backward before forward"), NumericalError);
  tape.backward(s);
  CHECK_THROWS_WITH_AS(tape.backward(s), doctest::Contains("already"), NumericalError);
  Tape t2;
  Var a = t2.constant(Tensor::vector({1.0, 2.0}));
  Var b = t2.constant(Tensor::vector({1.0, 2.0, 3.0}));
  CHECK_THROWS_AS(ag::add(a, b), UsageError);
  CHECK_THROWS_AS(ag::matvec(a, b), UsageError);
  CHECK_THROWS_AS(ag::add(a, other.constant(Tensor::vector({1.0, 2.0}))), UsageError);
}

TEST_CASE("non-finite values fail fast naming the op") {
  Tape tape;
  Var v = tape.constant(Tensor::vector({-1.0, 1.0}));
  CHECK_THROWS_WITH_AS(ag::log(v), doctest::Contains("'log'"), NumericalError);
  Var big = tape.constant(Tensor::vector({1000.0}));
  CHECK_THROWS_WITH_AS(ag::exp(big), doctest::Contains("'exp'"), NumericalError);
  CHECK_THROWS_AS(tape.constant(Tensor::vector({std::nan("")})), NumericalError);
}

TEST_CASE("plain numerics") {
  const std::vector<double> x = {1000.0, 1000.0};
  CHECK(num::logsumexp(x) == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-15));
  CHECK_THROWS_WITH_AS(num::logsumexp(std::vector<double>{}), doctest::Contains("empty reduction"), NumericalError);
  const auto p = num::softmax(std::vector<double>{0.0, 0.0, 0.0, 0.0});
  for (double v : p) CHECK(v == 0.25);
  CHECK(num::argmax(std::vector<double>{1.0, 3.0, 3.0}) == 1);
  const auto ls = num::log_softmax(std::vector<double>{-800.0, 0.0});
  CHECK(ls[1] == doctest::Approx(0.0));
  CHECK(std::isfinite(ls[0]));
}

TEST_CASE("softmax and log_softmax are stable for large inputs") {
  Tape tape;
  Var x = tape.constant(Tensor::vector({1e4, 1e4 + 1.0, -1e4}));
  const Tensor& s = ag::softmax(x).value();
  CHECK(s[0] + s[1] + s[2] == doctest::Approx(1.0).epsilon(1e-15));
  const Tensor& l = ag::log_softmax(x).value();
  CHECK(l[1] == doctest::Approx(-std::log1p(std::exp(-1.0))).epsilon(1e-12));
}

TEST_CASE("embedding checks ids and dropout is identity outside training") {
  Tape tape(Tape::Mode::inference);
  Var table = tape.constant(Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6}));
  const int ids[] = {2, 0};
  CHECK(ag::embedding(table, ids).value().values() == std::vector<double>{5, 6, 1, 2});
  const int bad[] = {3};
  CHECK_THROWS_AS(ag::embedding(table, bad), UsageError);
  std::mt19937_64 rng(1);
  Var x = tape.constant(Tensor::vector({1.0, 2.0, 3.0}));
  CHECK(ag::dropout(x, 0.5, rng).value() == x.value());
  Tape train;
  Var y = train.constant(Tensor(Shape{1000}, 1.0));
  const Tensor& d = ag::dropout(y, 0.5, rng).value();
  for (double v : d.values()) CHECK((v == 0.0 || v == 2.0));
}

TEST_CASE("grad_check detects a wrong gradient and non-determinism") {
  std::mt19937_64 rng(5);
  Parameter p = random_param("p", Shape{3}, rng);
  Parameter* ptrs[] = {&p};
  // A custom op with a deliberately wrong backward.
  auto wrong = [&](Tape& tape) {
    Var x = tape.param(p);
    Tensor v(Shape{}, std::vector<double>{0.0});
    for (double e : x.value().values()) v[0] += e * e;
    const std::uint32_t id = x.id();
    return tape.record("wrong_square", v, {x}, [id](Tape& t, const Tensor& g, const Tensor&) {
      Tensor& gx = t.grad(id);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g.item();
    });
  };
  CHECK_FALSE(grad_check(wrong, ptrs).passed());
  int calls = 0;
  auto noisy = [&](Tape& tape) { return ag::add_scalar(ag::sum(tape.param(p)), 1e-3 * ++calls); };
  CHECK_THROWS_WITH_AS(grad_check(noisy, ptrs), doctest::Contains("non-deterministic"), NumericalError);
}

TEST_CASE("every op passes finite-difference checks") {
  using V = std::vector<Var>;
  check_op("add", {{3, 2}, {3, 2}}, [](Tape&, V& v) { return ag::add(v[0], v[1]); });
  check_op("sub", {{4}, {4}}, [](Tape&, V& v) { return ag::sub(v[0], v[1]); });
  check_op("mul", {{3, 2}, {3, 2}}, [](Tape&, V& v) { return ag::mul(v[0], v[1]); });
  check_op("scale", {{5}}, [](Tape&, V& v) { return ag::scale(v[0], -1.7); });
  check_op("add_scalar", {{5}}, [](Tape&, V& v) { return ag::add_scalar(v[0], 0.3); });
  check_op("add_row", {{3, 4}, {4}}, [](Tape&, V& v) { return ag::add_row(v[0], v[1]); });
  check_op("tanh", {{6}}, [](Tape&, V& v) { return ag::tanh(v[0]); });
  check_op("sigmoid", {{6}}, [](Tape&, V& v) { return ag::sigmoid(v[0]); });
  check_op("relu", {{6}}, [](Tape&, V& v) { return ag::relu(v[0]); }, 0.1, 1.0);
  check_op("exp", {{6}}, [](Tape&, V& v) { return ag::exp(v[0]); });
  check_op("log", {{6}}, [](Tape&, V& v) { return ag::log(v[0]); }, 0.5, 2.0);
  check_op("clamp", {{6}}, [](Tape&, V& v) { return ag::clamp(v[0], -0.5, 0.5); }, -0.4, 0.4);
  check_op("matmul", {{3, 4}, {4, 2}}, [](Tape&, V& v) { return ag::matmul(v[0], v[1]); });
  check_op("matmul_nt", {{3, 4}, {2, 4}}, [](Tape&, V& v) { return ag::matmul_nt(v[0], v[1]); });
  check_op("matvec", {{3, 4}, {4}}, [](Tape&, V& v) { return ag::matvec(v[0], v[1]); });
  check_op("affine", {{3, 4}, {4}, {3}}, [](Tape&, V& v) { return ag::affine(v[0], v[1], v[2]); });
  check_op("linear_rows", {{5, 4}, {3, 4}, {3}}, [](Tape&, V& v) { return ag::linear_rows(v[0], v[1], v[2]); });
  check_op("concat", {{3}, {2}}, [](Tape&, V& v) { return ag::concat({v[0], v[1]}); });
  check_op("hconcat", {{3, 2}, {3, 4}}, [](Tape&, V& v) { return ag::hconcat(v); });
  check_op("vstack", {{2, 3}, {3}}, [](Tape&, V& v) { return ag::vstack(v); });
  check_op("slice", {{7}}, [](Tape&, V& v) { return ag::slice(v[0], 2, 3); });
  check_op("cols", {{3, 5}}, [](Tape&, V& v) { return ag::cols(v[0], 1, 3); });
  check_op("row", {{3, 5}}, [](Tape&, V& v) { return ag::row(v[0], 2); });
  check_op("reshape", {{6}}, [](Tape&, V& v) { return ag::reshape(v[0], Shape{2, 3}); });
  check_op("pick", {{6}}, [](Tape&, V& v) { return ag::pick(v[0], 4); });
  check_op("sum", {{2, 3}}, [](Tape&, V& v) { return ag::sum(v[0]); });
  check_op("mean", {{2, 3}}, [](Tape&, V& v) { return ag::mean(v[0]); });
  check_op("max", {{7}}, [](Tape&, V& v) { return ag::max(v[0]); });
  check_op("mean_rows", {{4, 3}}, [](Tape&, V& v) { return ag::mean_rows(v[0]); });
  check_op("max_rows", {{4, 3}}, [](Tape&, V& v) { return ag::max_rows(v[0]); });
  check_op("embedding", {{5, 3}}, [](Tape&, V& v) {
    const int ids[] = {4, 0, 4, 2};
    return ag::embedding(v[0], ids);
  });
  check_op("softmax", {{5}}, [](Tape&, V& v) { return ag::softmax(v[0]); });
  check_op("log_softmax", {{5}}, [](Tape&, V& v) { return ag::log_softmax(v[0]); });
  check_op("softmax_rows", {{3, 5}}, [](Tape&, V& v) { return ag::softmax_rows(v[0]); });
  check_op("logsumexp", {{5}}, [](Tape&, V& v) { return ag::logsumexp(v[0]); });
  check_op("cross_entropy", {{7}}, [](Tape&, V& v) { return ag::cross_entropy(v[0], 2); });
  check_op("nll_rows", {{3, 6}}, [](Tape&, V& v) {
    const int t[] = {5, 0, 2};
    return ag::nll_rows(v[0], t);
  });
  check_op("layer_norm_rows", {{3, 6}, {6}, {6}}, [](Tape&, V& v) { return ag::layer_norm_rows(v[0], v[1], v[2]); });
}
