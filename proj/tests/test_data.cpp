#include <doctest.h>

#include <map>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "fixtures.hpp"
#include "reidlab/data.hpp"

using namespace reidlab;

namespace {

double mean_distance(const IdentityDataset& d, bool same) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = i + 1; j < d.size(); ++j) {
      if ((d.ids[i] == d.ids[j]) != same) continue;
      std::vector<double> a(d.samples.row(i).begin(), d.samples.row(i).end());
      std::vector<double> b(d.samples.row(j).begin(), d.samples.row(j).end());
      s += oracle::euclid(a, b);
      ++n;
    }
  return s / static_cast<double>(n);
}

}  // namespace

TEST_CASE("synthetic identities") {
  SyntheticSpec spec;
  spec.seed = 3;
  auto d = gen_synthetic(spec);
  CHECK(d.size() == 1000);
  CHECK(d.dim() == 32);
  CHECK(d == gen_synthetic(spec));
  CHECK(mean_distance(d, true) < mean_distance(d, false));

  spec.sigma = 0.0;
  spec.identities = 5;
  spec.per_id = 4;
  auto tight = gen_synthetic(spec);
  for (std::size_t i = 1; i < 4; ++i)
    for (std::size_t c = 0; c < tight.dim(); ++c)
      CHECK(tight.samples(i, c) == tight.samples(0, c));
}

TEST_CASE("query/gallery split takes every fourth sample") {
  SyntheticSpec spec;
  spec.identities = 3;
  spec.per_id = 8;
  auto qg = split_query_gallery(gen_synthetic(spec));
  CHECK(qg.query.size() == 6);
  CHECK(qg.gallery.size() == 18);
  CHECK(qg.query.split == Split::Query);
}

TEST_CASE("pk batches have the requested histogram") {
  SyntheticSpec spec;
  auto d = gen_synthetic(spec);
  PkSampler sampler(d.ids, {}, 1);
  CHECK(sampler.batches_per_epoch() == 32);  // ceil(1000 / 32)
  for (int b = 0; b < 40; ++b) {
    auto rows = sampler.next_batch();
    REQUIRE(rows.size() == 32);
    std::map<int, int> hist;
    for (auto r : rows) ++hist[d.ids[r]];
    CHECK(hist.size() == 8);
    for (auto [id, c] : hist) CHECK(c == 4);
    // Every anchor sees K-1 positives and (P-1)K negatives.
    for (auto r : rows) {
      std::size_t pos = 0, neg = 0;
      for (auto o : rows) {
        if (o == r) continue;
        (d.ids[o] == d.ids[r] ? pos : neg) += 1;
      }
      CHECK(pos == 3);
      CHECK(neg == 28);
    }
  }
}

TEST_CASE("pk sampling edge cases") {
  std::vector<int> ids = {0, 0, 1, 1, 1, 1, 2, 2, 2, 2};
  auto two = pk_sample(ids, {2, 1}, 5);
  CHECK(two.size() == 2);
  CHECK(ids[two[0]] != ids[two[1]]);

  // Identity 0 has two samples; with K=4 its rows repeat those two.
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto rows = pk_sample(ids, {3, 4}, seed);
    std::set<std::size_t> of_zero;
    for (auto r : rows)
      if (ids[r] == 0) of_zero.insert(r);
    CHECK(of_zero.size() <= 2);
    for (auto r : of_zero) CHECK(r < 2);
  }
  CHECK_THROWS(pk_sample(ids, {4, 2}, 0));
}

TEST_CASE("random erasing") {
  ReaParams p;
  Image img(160, 64, 3, 0.25);
  SUBCASE("probability zero leaves the image alone") {
    p.probability = 0.0;
    CHECK(random_erase(img, p, 1) == img);
  }
  SUBCASE("rectangles respect both ranges") {
    RandomErasing rea(p);
    std::mt19937_64 rng(2);
    std::size_t erased = 0;
    for (int i = 0; i < 2000; ++i) {
      Image copy = img;
      auto r = rea.apply(copy, rng);
      if (!r) continue;
      ++erased;
      CHECK(r->area_ratio(img) > 0.02);
      CHECK(r->area_ratio(img) < 0.4);
      CHECK(r->aspect() > 0.3);
      CHECK(r->aspect() < 3.3);
      CHECK(r->top + r->height <= img.height);
      CHECK(r->left + r->width <= img.width);
    }
    CHECK(erased > 800);
    CHECK(erased < 1200);
  }
  SUBCASE("mean fill writes the channel means") {
    p.probability = 1.0;
    p.fill = EraseFill::Mean;
    p.mean = {0.1, 0.2, 0.3};
    RandomErasing rea(p);
    std::mt19937_64 rng(4);
    Image copy = img;
    auto r = rea.apply(copy, rng);
    REQUIRE(r);
    CHECK(copy.at(r->top, r->left, 2) == 0.3);
  }
  SUBCASE("tiny images are rejected and bad params fail validation") {
    Image one(1, 1, 1);
    RandomErasing rea(p);
    std::mt19937_64 rng(0);
    CHECK_THROWS(rea.apply(one, rng));
    ReaParams bad;
    bad.area_lo = 0.5;
    bad.area_hi = 0.4;
    CHECK_THROWS(bad.validate());
  }
}

TEST_CASE("embedding files") {
  SyntheticSpec spec;
  spec.identities = 4;
  spec.per_id = 3;
  spec.dim = 5;
  auto d = gen_synthetic(spec);
  std::stringstream ss;
  write_embeddings(d, ss);
  const std::string text = ss.str();
  CHECK(read_embeddings(ss) == d);

  SUBCASE("truncated file names expected and found rows") {
    auto cut = text.substr(0, text.rfind('\n', text.size() - 2) + 1);
    std::istringstream in(cut);
    try {
      read_embeddings(in);
      FAIL("expected a FormatError");
    } catch (const FormatError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("expected 12") != std::string::npos);
      CHECK(msg.find("11") != std::string::npos);
    }
  }
  SUBCASE("missing id column is a schema error") {
    auto bad = text;
    bad.replace(bad.find("id,cam"), 6, "cam");
    std::istringstream in(bad);
    CHECK_THROWS_WITH_AS(read_embeddings(in), doctest::Contains("schema"), FormatError);
  }
  SUBCASE("row length mismatch carries its line") {
    auto bad = text;
    const auto third = bad.find('\n', bad.find('\n', bad.find('\n') + 1) + 1);
    bad.insert(third, ",1.0");
    std::istringstream in(bad);
    try {
      read_embeddings(in);
      FAIL("expected a FormatError");
    } catch (const FormatError& e) {
      CHECK(e.line() == 3);
    }
  }
  SUBCASE("unknown version") {
    auto bad = text;
    bad.replace(bad.find("v1"), 2, "v9");
    std::istringstream in(bad);
    CHECK_THROWS_AS(read_embeddings(in), FormatError);
  }
}
