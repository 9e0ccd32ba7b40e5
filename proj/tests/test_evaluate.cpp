#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "reidlab/evaluate.hpp"

using namespace reidlab;

TEST_CASE("distance matrix basics") {
  Matrix q(2, 2, {1, 0, 0, 1});
  Matrix g(2, 2, {1, 0, 0, 0});
  auto e = distance_matrix(q, g);
  CHECK(e(0, 0) == 0.0);
  auto c = distance_matrix(q, g, Metric::Cosine);
  CHECK(c(1, 0) == doctest::Approx(1.0));
  CHECK(c(0, 1) == 1.0);  // zero gallery row
  CHECK_THROWS(distance_matrix(q, Matrix(1, 3)));
  CHECK(parse_metric("cosine") == Metric::Cosine);
  CHECK_FALSE(parse_metric("manhattan").has_value());
}

TEST_CASE("distance matrix matches the double loop") {
  std::mt19937_64 rng(8);
  auto q = fixture::random_matrix(50, 16, rng);
  auto g = fixture::random_matrix(200, 16, rng);
  auto d = distance_matrix(q, g);
  auto qr = fixture::to_rows(q), gr = fixture::to_rows(g);
  for (std::size_t i = 0; i < 50; ++i)
    for (std::size_t j = 0; j < 200; ++j)
      CHECK(std::abs(d(i, j) - oracle::euclid(qr[i], gr[j])) <= 1e-12);
}

TEST_CASE("average precision with matches at ranks 1 and 3") {
  Matrix d(1, 3, {0.1, 0.2, 0.3});
  std::vector<int> qid = {7}, gid = {7, 1, 7}, qcam = {0}, gcam = {1, 1, 1};
  auto r = evaluate_reid(d, qid, gid, qcam, gcam, 3);
  CHECK(r.map == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));
  CHECK(r.cmc[0] == 1.0);
}

TEST_CASE("same-id same-camera gallery entries are excluded") {
  Matrix d(1, 3, {0.1, 0.2, 0.3});
  std::vector<int> qid = {7}, gid = {7, 1, 7}, qcam = {0}, gcam = {0, 1, 1};
  auto r = evaluate_reid(d, qid, gid, qcam, gcam, 3);
  // Only the rank-2 true match remains, behind the distractor.
  CHECK(r.cmc[0] == 0.0);
  CHECK(r.cmc[1] == 1.0);
  CHECK(r.map == doctest::Approx(0.5));
}

TEST_CASE("ties break by gallery index") {
  Matrix d(1, 2, {0.5, 0.5});
  std::vector<int> qid = {1}, gid = {2, 1}, qcam = {0}, gcam = {1, 1};
  auto r = evaluate_reid(d, qid, gid, qcam, gcam, 2);
  CHECK(r.cmc[0] == 0.0);
  CHECK(r.map == 0.5);
}

TEST_CASE("queries without a valid match are skipped, all-invalid is rejected") {
  Matrix d(2, 2, {0.1, 0.2, 0.3, 0.4});
  std::vector<int> qid = {1, 9}, gid = {1, 2}, qcam = {0, 0}, gcam = {1, 1};
  auto r = evaluate_reid(d, qid, gid, qcam, gcam, 2);
  CHECK(r.valid_queries == 1);
  CHECK(std::isnan(r.ap[1]));
  std::vector<int> none = {5, 6};
  CHECK_THROWS(evaluate_reid(d, none, gid, qcam, gcam, 2));
}

TEST_CASE("random instances against the rank-counting evaluator") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> id(0, 9), cam(0, 2);
  for (int inst = 0; inst < 3; ++inst) {
    auto q = fixture::random_matrix(20, 4, rng);
    auto g = fixture::random_matrix(60, 4, rng);
    std::vector<int> qid(20), gid(60), qcam(20), gcam(60);
    for (auto& v : qid) v = id(rng);
    for (auto& v : gid) v = id(rng);
    for (auto& v : qcam) v = cam(rng);
    for (auto& v : gcam) v = cam(rng);
    auto d = distance_matrix(q, g);
    auto got = evaluate_reid(d, qid, gid, qcam, gcam, 20);
    auto ref = oracle::evaluate(fixture::to_rows(d), qid, gid, qcam, gcam, 20);
    CHECK(got.valid_queries == ref.valid);
    CHECK(std::abs(got.map - ref.map) <= 1e-9);
    for (std::size_t k = 0; k < 20; ++k) {
      CHECK(std::abs(got.cmc[k] - ref.cmc[k]) <= 1e-9);
      if (k) CHECK(got.cmc[k] >= got.cmc[k - 1]);
    }
    CHECK(got.map <= got.cmc[19] + 1e-12);

    // Squaring keeps every ranking.
    Matrix sq = d;
    for (auto& v : sq.data) v *= v;
    auto s = evaluate_reid(sq, qid, gid, qcam, gcam, 20);
    CHECK(s.map == got.map);
    CHECK(s.cmc == got.cmc);
  }
}

TEST_CASE("gallery permutation leaves mAP unchanged") {
  std::mt19937_64 rng(2);
  auto q = fixture::random_matrix(10, 3, rng);
  auto g = fixture::random_matrix(30, 3, rng);
  std::vector<int> qid(10), gid(30), qcam(10, 0), gcam(30, 1);
  for (std::size_t i = 0; i < 10; ++i) qid[i] = static_cast<int>(i % 5);
  for (std::size_t i = 0; i < 30; ++i) gid[i] = static_cast<int>(i % 5);
  auto base = evaluate_reid(distance_matrix(q, g), qid, gid, qcam, gcam, 10);
  std::vector<std::size_t> perm(30);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix g2(30, 3);
  std::vector<int> gid2(30);
  for (std::size_t i = 0; i < 30; ++i) {
    for (std::size_t c = 0; c < 3; ++c) g2(i, c) = g(perm[i], c);
    gid2[i] = gid[perm[i]];
  }
  auto moved = evaluate_reid(distance_matrix(q, g2), qid, gid2, qcam, gcam, 10);
  CHECK(std::abs(moved.map - base.map) <= 1e-12);
}
