#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "pfd/autograd.hpp"

using namespace pfd;

TEST_CASE("matmul, layer_norm and gelu gradients match finite differences") {
  std::mt19937_64 rng(3);
  ag::Var a(oracle::random_matrix(3, 4, rng), true);
  ag::Var b(oracle::random_matrix(4, 5, rng), true);
  ag::Var gamma(oracle::random_matrix(1, 5, rng), true);
  ag::Var beta(oracle::random_matrix(1, 5, rng), true);
  auto loss = [&] {
    ag::Var h = ag::gelu(ag::layer_norm(ag::matmul(a, b), gamma, beta));
    return ag::sum(ag::mul(h, h));
  };
  CHECK(oracle::gradient_check(loss, a) < 1e-6);
  CHECK(oracle::gradient_check(loss, b) < 1e-6);
  CHECK(oracle::gradient_check(loss, gamma) < 1e-6);
  CHECK(oracle::gradient_check(loss, beta) < 1e-6);
}

TEST_CASE("attention gradients match finite differences") {
  std::mt19937_64 rng(5);
  ag::Var q(oracle::random_matrix(3, 8, rng), true);
  ag::Var k(oracle::random_matrix(5, 8, rng), true);
  ag::Var v(oracle::random_matrix(5, 8, rng), true);
  ag::Var w(oracle::random_matrix(3, 8, rng));
  auto loss = [&] { return ag::sum(ag::mul(ag::attention(q, k, v, 2), w)); };
  CHECK(oracle::gradient_check(loss, q) < 1e-6);
  CHECK(oracle::gradient_check(loss, k) < 1e-6);
  CHECK(oracle::gradient_check(loss, v) < 1e-6);
}

TEST_CASE("attention weights are row-stochastic") {
  std::mt19937_64 rng(6);
  ag::Var q(oracle::random_matrix(4, 8, rng));
  ag::Var k(oracle::random_matrix(6, 8, rng));
  Matrix weights;
  ag::attention(q, k, k, 4, &weights);
  REQUIRE(weights.rows() == 4);
  REQUIRE(weights.cols() == 6);
  for (int i = 0; i < 4; ++i) CHECK(weights.row(i).sum() == doctest::Approx(1.0));
  CHECK(weights.minCoeff() >= 0.0);
}

TEST_CASE("gather, concat, slice and mean route gradients to the right rows") {
  std::mt19937_64 rng(7);
  ag::Var a(oracle::random_matrix(4, 3, rng), true);
  ag::Var b(oracle::random_matrix(2, 3, rng), true);
  const std::vector<int> idx = {3, 0, 3};
  auto loss = [&] {
    const std::vector<ag::Var> parts = {ag::gather_rows(a, idx), ag::slice_rows(b, 1, 1)};
    ag::Var m = ag::mean_rows(ag::concat_rows(parts));
    return ag::sum(ag::mul(m, m));
  };
  CHECK(oracle::gradient_check(loss, a) < 1e-6);
  CHECK(oracle::gradient_check(loss, b) < 1e-6);
  a.zero_grad();
  ag::backward(loss());
  CHECK(a.grad().row(1).norm() == 0.0);
  CHECK(a.grad().row(2).norm() == 0.0);
}

TEST_CASE("cosine and cross-entropy") {
  ag::Var x(Matrix{{1.0, 0.0}});
  ag::Var y(Matrix{{-1.0, 0.0}});
  CHECK(ag::cosine(x, x).item() == doctest::Approx(1.0));
  CHECK(ag::cosine(x, y).item() == doctest::Approx(-1.0));
  CHECK(ag::cross_entropy(ag::Var(Matrix::Zero(1, 4)), 2).item() ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK_THROWS_AS(ag::cross_entropy(ag::Var(Matrix::Zero(1, 4)), 4), std::out_of_range);
}

TEST_CASE("no-grad guard skips graph construction") {
  ag::Var a(Matrix::Ones(2, 2), true);
  {
    ag::NoGradGuard guard;
    CHECK_FALSE(ag::grad_enabled());
    CHECK_FALSE(ag::add(a, a).requires_grad());
  }
  CHECK(ag::grad_enabled());
  CHECK(ag::add(a, a).requires_grad());
}
