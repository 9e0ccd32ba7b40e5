#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "reidlab/gradcheck.hpp"
#include "reidlab/losses.hpp"

using namespace reidlab;

namespace {

// 2 ids × 2 rows with positives at 0.1 and negatives at 1.0.
Tensor separated_distmat() {
  return Tensor::from({4, 4}, {0.0, 0.1, 1.0, 1.0,  //
                               0.1, 0.0, 1.0, 1.0,  //
                               1.0, 1.0, 0.0, 0.1,  //
                               1.0, 1.0, 0.1, 0.0});
}
const std::vector<int> kSeparatedIds = {0, 0, 1, 1};

}  // namespace

TEST_CASE("pairwise distances match the double loop") {
  auto b = fixture::pk_batch(8, 4, 16, 7);
  EmbeddingBatch eb{b.tensor, b.ids, {}};
  auto d = pairwise_distances(eb);
  auto ref = oracle::distances(b.rows);
  for (std::size_t i = 0; i < 32; ++i)
    for (std::size_t j = 0; j < 32; ++j) {
      CHECK(d.at(i, j) == doctest::Approx(ref[i][j]).epsilon(1e-12));
      CHECK(d.at(i, j) == d.at(j, i));
    }
}

TEST_CASE("triplet_naive examples") {
  auto loss = [](double ap, double an, double m) {
    return triplet_naive(Tensor::scalar(ap), Tensor::scalar(an), m).item();
  };
  CHECK(loss(0.2, 0.5, 0.3) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(loss(0.5, 0.2, 0.3) == doctest::Approx(0.6));
  CHECK(loss(0.4, 0.4, 0.0) == 0.0);
}

TEST_CASE("batch-hard on a separated batch") {
  auto d = separated_distmat();
  CHECK(triplet_batch_hard(d, kSeparatedIds, 0.3).item() == 0.0);
  CHECK(triplet_batch_hard(d, kSeparatedIds, 1.0).item() == doctest::Approx(0.1));
}

TEST_CASE("batch-soft weights") {
  // Anchor 0 has positives at 0.2 and 0.4 and two negatives at 1.0.
  auto d = Tensor::from({5, 5}, {0.0, 0.2, 0.4, 1.0, 1.0,  //
                                 0.2, 0.0, 0.3, 1.0, 1.0,  //
                                 0.4, 0.3, 0.0, 1.0, 1.0,  //
                                 1.0, 1.0, 1.0, 0.0, 0.5,  //
                                 1.0, 1.0, 1.0, 0.5, 0.0});
  std::vector<int> ids = {0, 0, 0, 1, 1};
  auto t = soft_weighted_terms(d, ids);
  CHECK(t.pos_weights.at(0, 1) == doctest::Approx(0.4502).epsilon(1e-4));
  CHECK(t.pos_weights.at(0, 2) == doctest::Approx(0.5498).epsilon(1e-4));
  // Equidistant negatives share weight.
  CHECK(t.neg_weights.at(0, 3) == doctest::Approx(0.5));
  CHECK(t.neg_weights.at(0, 4) == doctest::Approx(0.5));
  for (std::size_t a = 0; a < 5; ++a) {
    double sp = 0.0, sn = 0.0;
    for (std::size_t j = 0; j < 5; ++j) {
      sp += t.pos_weights.at(a, j);
      sn += t.neg_weights.at(a, j);
    }
    CHECK(std::abs(sp - 1.0) <= 1e-12);
    CHECK(std::abs(sn - 1.0) <= 1e-12);
  }
}

TEST_CASE("batch-soft with a single positive is the plain triplet") {
  // Both negatives sit at the same distance, so the weighted negative is 0.8.
  auto d = Tensor::from({4, 4}, {0.0, 0.3, 0.8, 0.8,  //
                                 0.3, 0.0, 0.8, 0.8,  //
                                 0.8, 0.8, 0.0, 0.3,  //
                                 0.8, 0.8, 0.3, 0.0});
  CHECK(triplet_batch_soft(d, kSeparatedIds, 0.7).item() == doctest::Approx(0.2));
}

TEST_CASE("soft margin at balance is ln 2") {
  auto d = Tensor::from({4, 4}, {0.0, 0.5, 0.5, 0.5,  //
                                 0.5, 0.0, 0.5, 0.5,  //
                                 0.5, 0.5, 0.0, 0.5,  //
                                 0.5, 0.5, 0.5, 0.0});
  CHECK(triplet_soft_margin(d, kSeparatedIds).item() == doctest::Approx(std::log(2.0)));
}

TEST_CASE("soft margin stays positive where batch-hard is zero") {
  auto d = separated_distmat();
  CHECK(triplet_batch_hard(d, kSeparatedIds, 0.3).item() == 0.0);
  CHECK(triplet_soft_margin(d, kSeparatedIds).item() > 0.0);
}

TEST_CASE("soft margin pulls a positive toward its anchor") {
  // Two well separated clusters; moving row 1 toward row 0 must lower the loss.
  auto x = Tensor::from({4, 2}, {0.0, 0.0, 0.1, 0.0, 3.0, 0.0, 3.1, 0.0}, true);
  auto loss = [&] {
    return triplet_soft_margin(pairwise_distance(x, false), kSeparatedIds);
  };
  backward(loss());
  // d loss / d x1 has a positive x-component: gradient descent moves x1 left.
  CHECK(x.grad()[2] > 0.0);
}

TEST_CASE("losses match the brute-force enumerator on random PK batches") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto b = fixture::pk_batch(8, 4, 8, seed);
    EmbeddingBatch eb{b.tensor, b.ids, {}};
    auto d = pairwise_distances(eb);
    auto ref = oracle::distances(b.rows);
    CHECK(std::abs(triplet_batch_hard(d, b.ids, 0.3).item() -
                   oracle::batch_hard(ref, b.ids, 0.3)) < 1e-10);
    CHECK(std::abs(triplet_batch_soft(d, b.ids, 0.3).item() -
                   oracle::batch_soft(ref, b.ids, 0.3)) < 1e-10);
    CHECK(std::abs(triplet_soft_margin(d, b.ids).item() - oracle::soft_margin(ref, b.ids)) <
          1e-10);
    TripletConfig naive{TripletVariant::Naive, 0.3, Distance::Euclidean};
    CHECK(std::abs(triplet_loss(d, b.ids, naive).item() -
                   oracle::batch_all(ref, b.ids, 0.3)) < 1e-10);
  }
}

TEST_CASE("batch-soft argument never exceeds batch-hard argument") {
  auto b = fixture::pk_batch(8, 4, 8, 99);
  EmbeddingBatch eb{b.tensor, b.ids, {}};
  auto d = pairwise_distances(eb);
  auto s = soft_weighted_terms(d, b.ids);
  auto h = hard_terms(d, b.ids);
  for (std::size_t a = 0; a < b.ids.size(); ++a) {
    CHECK(s.weighted_pos[a] <= h.hardest_pos[a] + 1e-15);
    CHECK(s.weighted_neg[a] >= h.hardest_neg[a] - 1e-15);
  }
}

TEST_CASE("anchors without positives are rejected") {
  std::vector<int> ids = {0, 1, 1};
  CHECK_THROWS_AS(anchor_masks(ids), std::invalid_argument);
  std::vector<int> one_id = {2, 2};
  CHECK_THROWS_AS(anchor_masks(one_id), std::invalid_argument);
}

TEST_CASE("variant names round trip") {
  for (auto v : {TripletVariant::Naive, TripletVariant::BatchHard, TripletVariant::BatchSoft,
                 TripletVariant::SoftMargin})
    CHECK(parse_triplet_variant(to_string(v)) == v);
  CHECK_FALSE(parse_triplet_variant("nope").has_value());
}

TEST_CASE("smoothed cross-entropy") {
  SUBCASE("no smoothing is plain cross-entropy") {
    auto logits = Tensor::from({1, 3}, {1.0, 2.0, 0.5});
    std::vector<int> t = {1};
    double z = std::exp(1.0) + std::exp(2.0) + std::exp(0.5);
    CHECK(cross_entropy_smoothed(logits, t, {0.0, 3}).item() ==
          doctest::Approx(-std::log(std::exp(2.0) / z)));
  }
  SUBCASE("uniform logits give ln C") {
    auto logits = Tensor::zeros({2, 4});
    std::vector<int> t = {0, 3};
    CHECK(cross_entropy_smoothed(logits, t, {0.1, 4}).item() == doctest::Approx(std::log(4.0)));
  }
  SUBCASE("many classes against the direct formula") {
    const std::size_t c = 751;
    std::mt19937_64 rng(3);
    std::normal_distribution<double> z(0.0, 2.0);
    std::vector<double> v(2 * c);
    for (auto& x : v) x = z(rng);
    std::vector<int> t = {5, 700};
    double ref = 0.0;
    for (std::size_t r = 0; r < 2; ++r) {
      double mx = -1e300;
      for (std::size_t k = 0; k < c; ++k) mx = std::max(mx, v[r * c + k]);
      double s = 0.0;
      for (std::size_t k = 0; k < c; ++k) s += std::exp(v[r * c + k] - mx);
      for (std::size_t k = 0; k < c; ++k) {
        double q = static_cast<int>(k) == t[r] ? 0.9 : 0.1 / (c - 1);
        ref -= q * (v[r * c + k] - mx - std::log(s));
      }
    }
    ref /= 2.0;
    CHECK(cross_entropy_smoothed(Tensor::from({2, c}, v), t, {0.1, c}).item() ==
          doctest::Approx(ref).epsilon(1e-12));
  }
  SUBCASE("targets out of range are rejected") {
    std::vector<int> t = {4};
    CHECK_THROWS(cross_entropy_smoothed(Tensor::zeros({1, 4}), t, {0.1, 4}));
  }
}

TEST_CASE("soft margin gradient check on a random batch") {
  auto b = fixture::pk_batch(8, 4, 6, 11);
  auto rep = finite_diff_check(
      [&] { return triplet_soft_margin(pairwise_distance(b.tensor, false), b.ids); },
      {b.tensor});
  CHECK(rep.pass);
}
