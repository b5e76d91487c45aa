#include <doctest.h>

#include "oracles.hpp"
#include "pfd/pfa.hpp"

using namespace pfd;

TEST_CASE("cosine argmax against brute force") {
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<int> size(1, 8);
  std::uniform_int_distribution<int> dim(1, 6);
  for (int t = 0; t < 300; ++t) {
    const int m = size(rng);
    const int k = size(rng);
    const int d = dim(rng);
    Matrix p = oracle::random_matrix(m, d, rng);
    Matrix g = oracle::random_matrix(k, d, rng);
    if (t % 3 == 0 && k > 1) g.row(k - 1) = 2.5 * g.row(0);  // tie between rows 0 and k-1
    CHECK(match_rows(p, g) == oracle::argmax_cosine(p, g));
  }
}

TEST_CASE("hand cases for matching and distribution") {
  const Matrix basis{{1.0, 0.0}, {0.0, 1.0}};
  const ag::Var f_gp(basis);
  const PoseGuidedSet s = match_and_distribute(ag::Var(Matrix{{2.0, 0.1}}), f_gp);
  CHECK(s.match_index == std::vector<int>{0});
  CHECK(s.aggregated.value()(0, 0) == doctest::Approx(3.0));
  CHECK(s.aggregated.value()(0, 1) == doctest::Approx(0.1));

  const PoseGuidedSet same = match_and_distribute(ag::Var(Matrix{{0.0, 1.0}}), f_gp);
  CHECK(same.match_index == std::vector<int>{1});
  CHECK(same.aggregated.value() == Matrix{{0.0, 2.0}});

  CHECK(match_rows(Matrix{{10.0, 0.5}}, basis) == match_rows(Matrix{{2.0, 0.1}}, basis));
}

TEST_CASE("zero rows") {
  const Matrix cands{{0.0, 0.0}, {1.0, 1.0}, {-1.0, 0.0}};
  CHECK(cosine_argmax(RowVector::Zero(2), cands) == 0);
  CHECK(cosine_argmax(RowVector{{-1.0, 0.1}}, cands) == 2);
  CHECK(cosine_argmax(RowVector{{1.0, 0.5}}, cands) == 1);
}

TEST_CASE("pose gate is elementwise") {
  std::mt19937_64 rng(11);
  const Matrix f = oracle::random_matrix(3, 4, rng);
  const Matrix h = oracle::random_matrix(3, 4, rng);
  const Matrix p = pose_gate(ag::Var(f), ag::Var(h)).value();
  for (int i = 0; i < 3; ++i) {
    for (int d = 0; d < 4; ++d) CHECK(p(i, d) == f(i, d) * h(i, d));
  }
  CHECK(pose_gate(ag::Var(f), ag::Var(Matrix::Ones(3, 4))).value() == f);
  Matrix zero_row = h;
  zero_row.row(1).setZero();
  CHECK(pose_gate(ag::Var(f), ag::Var(zero_row)).value().row(1).norm() == 0.0);
  CHECK_THROWS_AS(pose_gate(ag::Var(f), ag::Var(Matrix::Ones(2, 4))), std::invalid_argument);
}

TEST_CASE("heatmap projection is linear") {
  Rng rng(12);
  ParamStore store;
  HeatmapProjection proj(store, 128, 8, rng);
  HeatmapSet hs;
  hs.map_height = 16;
  hs.map_width = 8;
  hs.maps = Matrix::Zero(3, 128);
  hs.confidences = {0.0, 0.5, 1.0};
  hs.maps.row(1) = oracle::random_matrix(1, 128, rng);
  hs.maps.row(2) = 3.0 * hs.maps.row(1);
  const Matrix out = proj(hs).value();
  CHECK(out.rows() == 3);
  CHECK(out.cols() == 8);
  CHECK(out.row(0).norm() == 0.0);
  CHECK((out.row(2) - 3.0 * out.row(1)).norm() < 1e-12);
}

TEST_CASE("aggregation gradients flow to the gated set and the chosen group features") {
  std::mt19937_64 rng(13);
  ag::Var gated(oracle::random_matrix(4, 5, rng), true);
  ag::Var f_gp(oracle::random_matrix(4, 5, rng), true);
  const ag::Var w(oracle::random_matrix(4, 5, rng));
  auto loss = [&] { return ag::sum(ag::mul(match_and_distribute(gated, f_gp).aggregated, w)); };
  CHECK(oracle::gradient_check(loss, gated) < 1e-6);
  CHECK(oracle::gradient_check(loss, f_gp) < 1e-6);
}
