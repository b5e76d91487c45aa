#include <doctest.h>

#include "oracles.hpp"
#include "pfd/eval.hpp"

using namespace pfd;

TEST_CASE("cosine distance") {
  const Matrix q{{1.0, 0.0}};
  const Matrix g{{2.0, 0.0}, {0.0, 1.0}, {-3.0, 0.0}};
  const Matrix d = distance_matrix(q, g);
  CHECK(d(0, 0) == doctest::Approx(0.0));
  CHECK(d(0, 1) == doctest::Approx(1.0));
  CHECK(d(0, 2) == doctest::Approx(2.0));
  CHECK((distance_matrix(g, q).transpose() - d).norm() < 1e-15);
  CHECK_THROWS_AS(distance_matrix(Matrix::Zero(1, 2), g), std::invalid_argument);
  CHECK_THROWS_AS(distance_matrix(q, Matrix::Ones(1, 3)), std::invalid_argument);
}

TEST_CASE("hand cases") {
  const std::vector<int> qid = {0};
  const std::vector<int> qcam = {0};
  const std::vector<int> gcam = {1, 1, 1};

  const EvalResult second = cmc_map(Matrix{{0.1, 0.2, 0.3}}, qid, std::vector<int>{1, 0, 2}, qcam, gcam, 3);
  CHECK(second.cmc == std::vector<double>{0.0, 1.0, 1.0});
  CHECK(second.mean_ap == doctest::Approx(0.5));

  const EvalResult first = cmc_map(Matrix{{0.1, 0.2, 0.3}}, qid, std::vector<int>{0, 1, 2}, qcam, gcam, 3);
  CHECK(first.rank(1) == 1.0);
  CHECK(first.mean_ap == 1.0);

  const EvalResult two = cmc_map(Matrix{{0.1, 0.2, 0.3}}, qid, std::vector<int>{0, 1, 0}, qcam, gcam, 3);
  CHECK(two.mean_ap == doctest::Approx(5.0 / 6.0));
}

TEST_CASE("same identity and camera entries are excluded, unanswerable queries skipped") {
  const Matrix d{{0.0, 0.5, 0.9}, {0.2, 0.1, 0.3}};
  const std::vector<int> qid = {0, 5};
  const std::vector<int> gid = {0, 1, 0};
  const EvalResult r = cmc_map(d, qid, gid, std::vector<int>{0, 0}, std::vector<int>{0, 1, 1}, 2);
  CHECK(r.evaluated_queries == 1);
  CHECK(r.skipped_queries == 1);
  CHECK(r.cmc == std::vector<double>{0.0, 1.0});
  CHECK(r.mean_ap == doctest::Approx(0.5));
  CHECK_THROWS(cmc_map(d, std::vector<int>{7, 8}, gid, std::vector<int>{0, 0},
                       std::vector<int>{0, 1, 1}, 2));
}

TEST_CASE("agrees with the exhaustive reference and is order independent") {
  std::mt19937_64 rng(50);
  std::uniform_int_distribution<int> size(1, 30);
  std::uniform_int_distribution<int> ids(0, 4);
  std::uniform_int_distribution<int> cams(0, 2);
  std::uniform_int_distribution<int> level(0, 5);
  for (int t = 0; t < 60; ++t) {
    const int q = size(rng);
    const int g = size(rng) + 5;
    Matrix d(q, g);
    for (Eigen::Index i = 0; i < d.size(); ++i) d.data()[i] = 0.1 * level(rng);  // many ties
    std::vector<int> qid(static_cast<std::size_t>(q)), qcam(static_cast<std::size_t>(q));
    std::vector<int> gid(static_cast<std::size_t>(g)), gcam(static_cast<std::size_t>(g));
    for (auto& v : qid) v = ids(rng);
    for (auto& v : qcam) v = cams(rng);
    for (auto& v : gid) v = ids(rng);
    for (auto& v : gcam) v = cams(rng);
    const auto ref = oracle::cmc_map(d, qid, gid, qcam, gcam, 5);
    if (ref.aps.empty()) continue;
    const EvalResult r = cmc_map(d, qid, gid, qcam, gcam, 5);
    for (int k = 0; k < 5; ++k) CHECK(r.cmc[static_cast<std::size_t>(k)] == doctest::Approx(ref.cmc[static_cast<std::size_t>(k)]));
    CHECK(r.mean_ap == doctest::Approx(ref.mean_ap));
    for (std::size_t k = 1; k < r.cmc.size(); ++k) CHECK(r.cmc[k] >= r.cmc[k - 1]);
    CHECK(r.mean_ap >= 0.0);
    CHECK(r.mean_ap <= 1.0);
  }

  Matrix d = oracle::random_matrix(8, 20, rng);
  std::vector<int> qid(8), gid(20), qcam(8, 0), gcam(20, 1);
  for (int i = 0; i < 8; ++i) qid[static_cast<std::size_t>(i)] = i % 4;
  for (int i = 0; i < 20; ++i) gid[static_cast<std::size_t>(i)] = i % 5;
  const EvalResult base = cmc_map(d, qid, gid, qcam, gcam, 10);
  std::vector<int> perm(20);
  for (int i = 0; i < 20; ++i) perm[static_cast<std::size_t>(i)] = (i * 7) % 20;
  Matrix dp(8, 20);
  std::vector<int> gidp(20);
  for (int i = 0; i < 20; ++i) {
    dp.col(i) = d.col(perm[static_cast<std::size_t>(i)]);
    gidp[static_cast<std::size_t>(i)] = gid[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
  }
  const EvalResult shuffled = cmc_map(dp, qid, gidp, qcam, gcam, 10);
  CHECK(shuffled.cmc == base.cmc);
  CHECK(shuffled.mean_ap == doctest::Approx(base.mean_ap));
}
