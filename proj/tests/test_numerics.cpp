#include <cmath>
#include <vector>

#include "conform/errors.hpp"
#include "conform/rng.hpp"
#include "conform/tape.hpp"
#include "conform/tensor.hpp"
#include "test_support.hpp"

using namespace conform;
using conform::testing::gradient_error;
using conform::testing::project;

TEST_CASE("matmul examples") {
  const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  CHECK(matmul(Tensor::matrix({{1, 0}, {0, 1}}), a) == a);
  CHECK(matmul(a, Tensor::matrix({{0, 0}, {0, 0}})) == Tensor::filled({2, 2}, 0.0));
  CHECK(matmul(a, Tensor::matrix({{5, 6}, {7, 8}})) == Tensor::matrix({{19, 22}, {43, 50}}));
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
  CHECK_THROWS_AS(matmul(Tensor({2, 3}), Tensor({2, 3})), DimensionError);
}

TEST_CASE("matmul is associative up to rounding") {
  Rng rng(11);
  for (int i = 0; i < 10; ++i) {
    const Tensor a = rng.normal_tensor({3, 4}), b = rng.normal_tensor({4, 5}), c = rng.normal_tensor({5, 2});
    CHECK(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) < 1e-12);
  }
}

TEST_CASE("tensor construction checks length") {
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
  CHECK_THROWS_AS(Tensor::vector({1.0, 2.0}).item(), ContractError);
  CHECK(Tensor::scalar(3.5).item() == 3.5);
}

TEST_CASE("softmax examples") {
  Tape tape;
  const Var zero = tape.input(Tensor::matrix({{0, 0, 0}}));
  for (double v : softmax_rows(zero).value().data()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));

  const Var shifted = tape.input(Tensor::matrix({{7.25, 7.25, 7.25, 7.25}}));
  for (double v : softmax_rows(shifted).value().data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

  const Tensor s = softmax_rows(tape.input(Tensor::matrix({{0, std::log(2.0)}}))).value();
  CHECK(std::abs(s[0] - 1.0 / 3) < 1e-15);
  CHECK(std::abs(s[1] - 2.0 / 3) < 1e-15);
}

TEST_CASE("softmax survives large logits and rows sum to one") {
  Tape tape;
  Rng rng(5);
  Tensor x = rng.normal_tensor({6, 9}, 300.0);
  const Tensor s = softmax_rows(tape.input(x)).value();
  for (std::size_t i = 0; i < 6; ++i) {
    double total = 0;
    for (std::size_t j = 0; j < 9; ++j) total += s.at(i, j);
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("finite differences are exact on sum and constant functions") {
  Rng rng(3);
  const Tensor z = rng.normal_tensor({4, 3});
  for (double h : {1e-3, 1e-5}) {
    const Tensor g = finite_diff_grad([](const Tensor& t) {
      double s = 0;
      for (double v : t.data()) s += v;
      return s;
    }, z, h);
    for (double v : g.data()) CHECK(std::abs(v - 1.0) < 1e-9);
  }
  const Tensor zero = finite_diff_grad([](const Tensor&) { return 4.0; }, z, 1e-5);
  CHECK(zero == Tensor::filled(z.shape(), 0.0));
  CHECK_THROWS_AS(finite_diff_grad([](const Tensor&) { return 0.0; }, z, 0.0), ContractError);
}

TEST_CASE("autodiff of sum and zero scaling") {
  Rng rng(1);
  const Tensor z = rng.normal_tensor({3, 3});
  CHECK(testing::autodiff([](Var x) { return sum(x); }, z) == Tensor::filled({3, 3}, 1.0));
  CHECK(testing::autodiff([](Var x) { return sum(scale(x, 0.0)); }, z) == Tensor::filled({3, 3}, 0.0));
}

TEST_CASE("every op matches central differences at ten random points") {
  constexpr double kTol = 1e-6;
  Rng rng(99);
  const Tensor b = rng.normal_tensor({4, 2});
  const Tensor other = rng.normal_tensor({3, 4});
  const Tensor v = rng.normal_tensor({5});

  SUBCASE("matmul left") {
    CHECK(gradient_error([&](Var x) { return project(matmul(x, x.tape().constant(b)), 1); }, {3, 4}, 10) < kTol);
  }
  SUBCASE("matmul right") {
    CHECK(gradient_error([&](Var x) { return project(matmul(x.tape().constant(other), x), 2); }, {4, 2}, 11) < kTol);
  }
  SUBCASE("add sub mul") {
    CHECK(gradient_error([&](Var x) {
      const Var c = x.tape().constant(other);
      return project(mul(sub(add(x, c), scale(x, 0.5)), add_scalar(x, 1.5)), 3);
    }, {3, 4}, 12) < kTol);
  }
  SUBCASE("exp and log") {
    CHECK(gradient_error([](Var x) { return project(log(add_scalar(exp(x), 0.25)), 4); }, {3, 4}, 13) < kTol);
  }
  SUBCASE("mean") { CHECK(gradient_error([](Var x) { return mean(mul(x, x)); }, {3, 4}, 14) < kTol); }
  SUBCASE("softmax rows") {
    CHECK(gradient_error([](Var x) { return project(softmax_rows(x), 5); }, {3, 4}, 15) < kTol);
  }
  SUBCASE("reshape and slice") {
    CHECK(gradient_error([](Var x) { return project(slice_last(reshape(x, {2, 2, 3}), 1), 6); }, {3, 4}, 16) < kTol);
  }
  SUBCASE("element and stack") {
    CHECK(gradient_error([](Var x) {
      const std::vector<Var> parts{element(x, 0), scale(element(x, 3), -2.0), mul(element(x, 5), element(x, 1))};
      return project(stack(parts), 7);
    }, {3, 4}, 17) < kTol);
  }
  SUBCASE("logsumexp") { CHECK(gradient_error([](Var x) { return logsumexp(x); }, {7}, 18) < kTol); }
  SUBCASE("dot") {
    CHECK(gradient_error([&](Var x) { return dot(x, x.tape().constant(v)); }, {5}, 19) < kTol);
  }
  SUBCASE("cosine of softmax projection") {
    const Tensor w = rng.normal_tensor({4, 1});
    CHECK(gradient_error([&](Var x) {
      const Var y = reshape(matmul(softmax_rows(x), x.tape().constant(w)), {5});
      return cosine_sim(y, x.tape().constant(v));
    }, {5, 4}, 20) < kTol);
  }
}

TEST_CASE("log rejects non-positive input and tape rejects non-finite values") {
  Tape tape;
  CHECK_THROWS_AS(log(tape.input(Tensor::vector({1.0, 0.0}))), NumericError);
  CHECK_THROWS_AS(exp(tape.input(Tensor::vector({1000.0}))), NumericError);
  CHECK_THROWS_AS(tape.input(Tensor::vector({std::nan("")})), NumericError);
}

TEST_CASE("cosine_sim of a zero vector is degenerate") {
  Tape tape;
  CHECK_THROWS_AS(cosine_sim(tape.input(Tensor::vector({0, 0})), tape.input(Tensor::vector({1, 0}))),
                  DegenerateInputError);
}

TEST_CASE("backward contract") {
  Tape tape;
  const Var x = tape.input(Tensor::vector({1, 2, 3}));
  const Var c = tape.constant(Tensor::vector({1, 1, 1}));
  const Var y = mul(x, x);
  CHECK_THROWS_AS(tape.gradient(y, x), ContractError);
  CHECK_THROWS_AS(tape.gradient(sum(y), c), ContractError);

  Tape other;
  const Var foreign = other.input(Tensor::vector({1, 2, 3}));
  CHECK_THROWS_AS(add(x, foreign), ContractError);
}

TEST_CASE("backward visits each recorded node once and leaves unused inputs at zero") {
  Tape tape;
  const Var x = tape.input(Tensor::vector({1, 2}));
  const Var unused = tape.input(Tensor::vector({5, 6, 7}));
  const Var loss = sum(mul(x, x));
  const std::vector<Var> wrt{x, unused};
  const auto grads = tape.backward(loss, wrt);
  CHECK(grads[0] == Tensor::vector({2, 4}));
  CHECK(grads[1] == Tensor::filled({3}, 0.0));
  CHECK(tape.last_backward_visits() == tape.size());
}

TEST_CASE("constants do not receive gradient closures") {
  Tape tape;
  const Var c = tape.constant(Tensor::vector({1, 2}));
  CHECK_FALSE(exp(c).requires_grad());
  CHECK(exp(tape.input(Tensor::vector({1, 2}))).requires_grad());
}

TEST_CASE("rng is reproducible per seed") {
  Rng a(42), b(42), c(43);
  const Tensor ta = a.normal_tensor({32}), tb = b.normal_tensor({32}), tc = c.normal_tensor({32});
  CHECK(ta == tb);
  CHECK_FALSE(ta == tc);
  Rng u(7);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    CHECK((x >= 0.0 && x < 1.0));
  }
}
