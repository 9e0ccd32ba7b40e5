#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "reidlab/archshape.hpp"

using namespace reidlab::arch;

namespace {

oracle::Conv as_oracle(const ConvWeights& w) {
  return {w.out_channels, w.in_channels, w.kernel, w.groups, w.weight, w.bias};
}

FeatureMap random_map(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  FeatureMap x(c, h, w);
  for (auto& v : x.data) v = z(rng);
  return x;
}

// Branch output computed by the oracle: a chain of convolutions with a ReLU
// after the listed stages.
std::vector<double> chain(std::vector<double> x, std::size_t c, std::size_t h, std::size_t w,
                          const std::vector<std::pair<ConvWeights, std::size_t>>& convs,
                          const std::vector<bool>& relu_after, std::size_t& oh,
                          std::size_t& ow) {
  for (std::size_t i = 0; i < convs.size(); ++i) {
    x = oracle::conv(x, c, h, w, as_oracle(convs[i].first), convs[i].second, oh, ow);
    if (relu_after[i]) x = oracle::relu(std::move(x));
    c = convs[i].first.out_channels;
    h = oh;
    w = ow;
  }
  return x;
}

std::vector<double> slice(const FeatureMap& x, std::size_t from, std::size_t to) {
  const std::size_t plane = x.height * x.width;
  return {x.data.begin() + static_cast<long>(from * plane),
          x.data.begin() + static_cast<long>(to * plane)};
}

void check_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  CHECK(worst <= tol);
}

}  // namespace

TEST_CASE("channel shuffle") {
  CHECK(shuffle_permutation(4, 2) == std::vector<std::size_t>{0, 2, 1, 3});
  auto x = random_map(4, 2, 3, 1);
  CHECK(channel_shuffle(channel_shuffle(x)) == x);
  auto x6 = random_map(6, 3, 3, 2);
  auto y = channel_shuffle(x6, 3);
  for (std::size_t p = 0; p < 9; ++p) {
    std::vector<double> a, b;
    for (std::size_t c = 0; c < 6; ++c) {
      a.push_back(x6.data[c * 9 + p]);
      b.push_back(y.data[c * 9 + p]);
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
  }
  CHECK_THROWS(shuffle_permutation(6, 4));
}

TEST_CASE("shuffle-a with zero and identity weights") {
  auto x = random_map(8, 4, 4, 3);
  auto z = shuffle_a_concat(x, ShuffleAWeights::zeros(8));
  for (std::size_t i = 4 * 16; i < z.data.size(); ++i) CHECK(z.data[i] == 0.0);
  // Identity weights pass non-negative inputs straight through.
  FeatureMap pos = x;
  for (auto& v : pos.data) v = std::abs(v);
  CHECK(shuffle_a_forward(pos, ShuffleAWeights::identity(8)) == channel_shuffle(pos));
}

TEST_CASE("shuffle-a matches the nested-loop oracle") {
  auto x = random_map(8, 5, 5, 4);
  auto w = ShuffleAWeights::random(8, 5);
  std::size_t oh = 0, ow = 0;
  auto branch = chain(slice(x, 4, 8), 4, 5, 5, {{w.pw1, 1}, {w.dw, 1}, {w.pw2, 1}},
                      {true, false, true}, oh, ow);
  auto expect = slice(x, 0, 4);
  expect.insert(expect.end(), branch.begin(), branch.end());
  check_close(shuffle_a_concat(x, w).data, expect, 1e-10);
}

TEST_CASE("shuffle-b shapes and oracle") {
  auto w = ShuffleBWeights::random(6, 12, 6);
  auto big = random_map(6, 40, 16, 7);
  auto y = shuffle_b_forward(big, w, 2);
  CHECK(y.channels == 12);
  CHECK(y.height == 20);
  CHECK(y.width == 8);
  CHECK(shuffle_b_forward(big, ShuffleBWeights::random(6, 6, 1), 1).height == 40);

  for (std::size_t stride : {1u, 2u}) {
    auto x = random_map(6, 6, 6, 8 + stride);
    std::size_t oh = 0, ow = 0;
    auto b1 = chain(x.data, 6, 6, 6, {{w.b1_dw, stride}, {w.b1_pw, 1}}, {false, true}, oh, ow);
    auto b2 = chain(x.data, 6, 6, 6, {{w.b2_pw1, 1}, {w.b2_dw, stride}, {w.b2_pw2, 1}},
                    {true, false, true}, oh, ow);
    b1.insert(b1.end(), b2.begin(), b2.end());
    check_close(shuffle_b_concat(x, w, stride).data, b1, 1e-10);
  }
}

TEST_CASE("conv rejects mismatched channels") {
  CHECK_THROWS(conv2d(FeatureMap(3, 4, 4), ConvWeights::zeros(2, 4, 1)));
}

TEST_CASE("network description") {
  auto one = build_network(Width::X1);
  const auto& conv1 = one.layers.front();
  CHECK(conv1.kind == LayerKind::Conv3x3);
  CHECK(conv1.stride == 2);
  auto s = output_shape(conv1);
  CHECK(s.height == 80);
  CHECK(s.width == 32);

  std::vector<const LayerSpec*> stage1;
  for (const auto& l : one.layers)
    if (l.name.rfind("stage1.", 0) == 0) stage1.push_back(&l);
  REQUIRE(stage1.size() == 3);
  CHECK(stage1[0]->kind == LayerKind::ShuffleB);
  CHECK(stage1[1]->kind == LayerKind::ShuffleA);
  CHECK(stage1[1]->repeat == 7);
  CHECK(stage1[2]->kind == LayerKind::ShuffleB);
  CHECK(stage1[2]->out_channels == 128);

  auto two = build_network(Width::X2);
  CHECK(two.feature_dim == 960);
  CHECK(check_chain(one).empty());
  CHECK(check_chain(two).empty());

  // A broken chain is reported.
  auto broken = one;
  broken.layers[2].in_channels += 1;
  CHECK_FALSE(check_chain(broken).empty());
}

TEST_CASE("single-layer counts") {
  CHECK(conv_params(3, 3, 36) == 1008);
  CHECK(linear_params(512, 751) == 385263);
  CHECK(conv_params(3, 8, 8, 8, false) == 72);
}

TEST_CASE("totals within tolerance of the reference") {
  for (auto w : {Width::X1, Width::X2}) {
    auto spec = build_network(w);
    auto ref = reference_totals(w);
    const double p = static_cast<double>(count_params(spec));
    const double f = static_cast<double>(count_flops(spec));
    CHECK(std::abs(p / ref.params - 1.0) <= 0.2);
    CHECK(std::abs(f / ref.flops - 1.0) <= 0.2);
    auto rows = breakdown(spec);
    std::uint64_t sum = 0;
    for (const auto& r : rows) {
      sum += r.params;
      if (r.kind == LayerKind::HaBlock) CHECK(r.assumption_based);
    }
    CHECK(sum == count_params(spec));
  }
}

TEST_CASE("count scaling properties") {
  auto spec = build_network(Width::X1);
  auto more = spec;
  for (auto& l : more.layers)
    if (l.kind == LayerKind::ShuffleA) l.repeat *= 2;
  CHECK(count_params(more) > count_params(spec));

  CountOptions two_mac{true, FlopConvention::TwoMac};
  CHECK(count_flops(spec, two_mac) == 2 * count_flops(spec));

  // FLOPs of a single layer scale with its input area.
  LayerSpec l;
  l.kind = LayerKind::ShuffleA;
  l.in_channels = l.out_channels = 64;
  l.in_h = 20;
  l.in_w = 8;
  NetSpec a{Width::X1, {l}, 0};
  l.in_h = 40;
  l.in_w = 16;
  NetSpec b{Width::X1, {l}, 0};
  CHECK(count_flops(b) == 4 * count_flops(a));
}

TEST_CASE("width names") {
  CHECK(parse_width("1x") == Width::X1);
  CHECK(parse_width("2x") == Width::X2);
  CHECK_FALSE(parse_width("3x").has_value());
}
