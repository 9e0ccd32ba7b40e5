#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "reidlab/swag.hpp"

using namespace reidlab;

namespace {

WeightLayout one_param() {
  WeightLayout l;
  l.append("w", 1);
  return l;
}

WeightVector wv(const WeightLayout& l, std::vector<double> v) { return {l, std::move(v)}; }

}  // namespace

TEST_CASE("moments of two scalar snapshots") {
  auto l = one_param();
  SwagPosterior post(l);
  post = collect_snapshot(post, wv(l, {1.0}));
  post = collect_snapshot(post, wv(l, {3.0}));
  CHECK(post.mean()[0] == 2.0);
  CHECK(post.second_moment()[0] == 5.0);
  CHECK(post.diag_variance().values[0] == 1.0);
}

TEST_CASE("identical snapshots hit the variance floor") {
  auto l = one_param();
  SwagPosterior post(l);
  for (int i = 0; i < 4; ++i) post.collect(wv(l, {0.1}));
  auto var = post.diag_variance();
  CHECK(var.values[0] == SwagPosterior::kVarianceFloor);
  CHECK(var.floored == 1);
  CHECK(swa_weights(post).values[0] == doctest::Approx(0.1).epsilon(1e-15));
}

TEST_CASE("streaming moments equal offline moments and ignore order") {
  WeightLayout l;
  l.append("a", 3);
  l.append("b", 2);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<std::vector<double>> snaps(15, std::vector<double>(5));
  for (auto& s : snaps)
    for (auto& v : s) v = z(rng);
  SwagPosterior fwd(l), rev(l);
  for (auto& s : snaps) fwd.collect(wv(l, s));
  for (auto it = snaps.rbegin(); it != snaps.rend(); ++it) rev.collect(wv(l, *it));
  for (std::size_t i = 0; i < 5; ++i) {
    double m = 0.0, q = 0.0;
    for (auto& s : snaps) {
      m += s[i];
      q += s[i] * s[i];
    }
    m /= 15.0;
    q /= 15.0;
    CHECK(std::abs(fwd.mean()[i] - m) <= 1e-12);
    CHECK(std::abs(fwd.second_moment()[i] - q) <= 1e-10);
    CHECK(std::abs(fwd.mean()[i] - rev.mean()[i]) <= 1e-12);
  }
}

TEST_CASE("layout mismatch and empty posterior are rejected") {
  auto l = one_param();
  SwagPosterior post(l);
  CHECK_THROWS(swa_weights(post));
  WeightLayout other;
  other.append("w", 2);
  CHECK_THROWS(post.collect(wv(other, {1.0, 2.0})));
}

TEST_CASE("sampling") {
  auto l = one_param();
  auto post = SwagPosterior::from_moments(l, 2, {2.0}, {5.0});
  SUBCASE("scale zero returns the mean bitwise") {
    CHECK(swag_sample(post, 0.0, 9).values == post.mean());
  }
  SUBCASE("fixed seed repeats") {
    CHECK(swag_sample(post, 1.0, 9).values == swag_sample(post, 1.0, 9).values);
    CHECK(swag_sample(post, 1.0, 9).values != swag_sample(post, 1.0, 10).values);
  }
  SUBCASE("monte-carlo moments") {
    double s = 0.0, s2 = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      double v = swag_sample(post, 1.0, derive_seed(77, i)).values[0];
      s += v;
      s2 += v * v;
    }
    const double m = s / n, var = s2 / n - m * m;
    CHECK(std::abs(m - 2.0) < 0.05);
    CHECK(std::abs(var - 1.0) < 0.1);
  }
}

TEST_CASE("bma of a linear model equals the model at the mean") {
  WeightLayout l;
  l.append("w", 2);
  auto post = SwagPosterior::from_moments(l, 4, {1.0, -2.0}, {1.25, 4.5});
  ModelEvaluator linear = [](const WeightVector& w, const std::vector<double>& x) {
    return std::vector<double>{w.values[0] * x[0] + w.values[1] * x[1]};
  };
  BmaOptions opt;
  opt.renormalize = false;
  opt.scale = 1.0;
  opt.samples = 4000;
  opt.seed = 3;
  auto out = bma_predict(post, linear, {0.5, 1.5}, opt);
  // Mean output is -2.5; per-sample sd is about 0.79, so 4000 samples give
  // a standard error of about 0.0125.
  CHECK(std::abs(out[0] - (-2.5)) < 0.05);
  opt.samples = 1;
  opt.scale = 0.0;
  CHECK(bma_predict(post, linear, {0.5, 1.5}, opt)[0] == doctest::Approx(-2.5));
}

TEST_CASE("bma gap shrinks with more samples") {
  WeightLayout l;
  l.append("w", 3);
  auto post = SwagPosterior::from_moments(l, 5, {0.3, -0.1, 0.8}, {0.19, 0.11, 0.74});
  ModelEvaluator tanh_model = [](const WeightVector& w, const std::vector<double>& x) {
    std::vector<double> y(3);
    for (std::size_t i = 0; i < 3; ++i) y[i] = std::tanh(w.values[i] * x[i]);
    return y;
  };
  const std::vector<double> x = {1.0, 2.0, -1.0};
  auto gap = [&](std::size_t s) {
    // Mean L2 distance to a high-sample reference over repeated runs.
    BmaOptions ref_opt{4096, 1.0, 12345, false};
    auto ref = bma_predict(post, tanh_model, x, ref_opt);
    double total = 0.0;
    for (std::uint64_t r = 0; r < 40; ++r) {
      auto y = bma_predict(post, tanh_model, x, {s, 1.0, r, false});
      double d = 0.0;
      for (std::size_t i = 0; i < 3; ++i) d += (y[i] - ref[i]) * (y[i] - ref[i]);
      total += std::sqrt(d);
    }
    return total / 40.0;
  };
  CHECK(gap(64) < gap(8));
}

TEST_CASE("posterior file round trip") {
  WeightLayout l;
  l.append("w0", 2);
  l.append("b0", 1);
  SwagPosterior post(l);
  post.collect(wv(l, {1.0, 2.0, 3.0}));
  post.collect(wv(l, {0.5, 2.5, -3.0}));
  auto path = std::filesystem::temp_directory_path() / "reidlab_test_posterior.swag";
  post.save(path);
  auto back = SwagPosterior::load(path);
  CHECK(back.layout() == l);
  CHECK(back.count() == 2);
  CHECK(back.mean() == post.mean());
  CHECK(back.second_moment() == post.second_moment());
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
  CHECK_THROWS(SwagPosterior::load(path));
  std::filesystem::remove(path);
}

TEST_CASE("derived seeds differ per index") {
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) == derive_seed(1, 0));
}
