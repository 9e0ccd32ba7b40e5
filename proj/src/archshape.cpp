#include "reidlab/archshape.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

namespace reidlab::arch {

namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

std::string dims(std::size_t c, std::size_t h, std::size_t w) {
  return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
}

}  // namespace

// ---------------------------------------------------------------------------
// Concrete forwards

ConvWeights ConvWeights::zeros(std::size_t out, std::size_t in, std::size_t kernel,
                               std::size_t groups) {
  require(groups > 0 && in % groups == 0 && out % groups == 0,
          "conv: channels " + std::to_string(in) + "->" + std::to_string(out) +
              " not divisible by groups " + std::to_string(groups));
  require(kernel % 2 == 1, "conv: kernel must be odd");
  ConvWeights w;
  w.out_channels = out;
  w.in_channels = in;
  w.kernel = kernel;
  w.groups = groups;
  w.weight.assign(out * (in / groups) * kernel * kernel, 0.0);
  w.bias.assign(out, 0.0);
  return w;
}

ConvWeights ConvWeights::identity(std::size_t channels, std::size_t kernel,
                                  std::size_t groups) {
  ConvWeights w = zeros(channels, channels, kernel, groups);
  const std::size_t per_group = channels / groups;
  const std::size_t kk = kernel * kernel;
  const std::size_t centre = (kernel / 2) * kernel + kernel / 2;
  for (std::size_t o = 0; o < channels; ++o) {
    const std::size_t local_in = o % per_group;
    w.weight[(o * per_group + local_in) * kk + centre] = 1.0;
  }
  return w;
}

ConvWeights ConvWeights::random(std::size_t out, std::size_t in, std::size_t kernel,
                                std::size_t groups, std::uint64_t seed) {
  ConvWeights w = zeros(out, in, kernel, groups);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& v : w.weight) v = u(rng);
  for (auto& v : w.bias) v = u(rng);
  return w;
}

FeatureMap conv2d(const FeatureMap& x, const ConvWeights& w, std::size_t stride) {
  require(x.channels == w.in_channels,
          "conv: input has " + std::to_string(x.channels) + " channels, weights expect " +
              std::to_string(w.in_channels));
  require(stride == 1 || stride == 2, "conv: stride must be 1 or 2");
  const std::size_t k = w.kernel, pad = k / 2;
  const std::size_t in_pg = w.in_channels / w.groups;
  const std::size_t out_pg = w.out_channels / w.groups;
  FeatureMap y(w.out_channels, ceil_div(x.height, stride), ceil_div(x.width, stride));
  for (std::size_t o = 0; o < w.out_channels; ++o) {
    const std::size_t g = o / out_pg;
    for (std::size_t oy = 0; oy < y.height; ++oy)
      for (std::size_t ox = 0; ox < y.width; ++ox) {
        double acc = w.bias[o];
        for (std::size_t ci = 0; ci < in_pg; ++ci) {
          const std::size_t c = g * in_pg + ci;
          for (std::size_t ky = 0; ky < k; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                      static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(x.height)) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                        static_cast<std::ptrdiff_t>(pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(x.width)) continue;
              acc += w.weight[((o * in_pg + ci) * k + ky) * k + kx] *
                     x.at(c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
            }
          }
        }
        y.at(o, oy, ox) = acc;
      }
  }
  return y;
}

FeatureMap relu(FeatureMap x) {
  for (auto& v : x.data) v = std::max(v, 0.0);
  return x;
}

FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b) {
  require(a.height == b.height && a.width == b.width,
          "concat: spatial mismatch " + dims(a.channels, a.height, a.width) + " vs " +
              dims(b.channels, b.height, b.width));
  FeatureMap y(a.channels + b.channels, a.height, a.width);
  std::copy(a.data.begin(), a.data.end(), y.data.begin());
  std::copy(b.data.begin(), b.data.end(),
            y.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
  return y;
}

std::vector<std::size_t> shuffle_permutation(std::size_t channels, std::size_t groups) {
  require(groups > 0 && channels % groups == 0,
          "channel_shuffle: " + std::to_string(channels) +
              " channels not divisible by " + std::to_string(groups) + " groups");
  const std::size_t per = channels / groups;
  std::vector<std::size_t> perm(channels);
  for (std::size_t k = 0; k < channels; ++k) perm[k] = (k % groups) * per + k / groups;
  return perm;
}

FeatureMap channel_shuffle(const FeatureMap& x, std::size_t groups) {
  const auto perm = shuffle_permutation(x.channels, groups);
  const std::size_t plane = x.height * x.width;
  FeatureMap y(x.channels, x.height, x.width);
  for (std::size_t k = 0; k < x.channels; ++k)
    std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(perm[k] * plane), plane,
                y.data.begin() + static_cast<std::ptrdiff_t>(k * plane));
  return y;
}

ShuffleAWeights ShuffleAWeights::zeros(std::size_t channels) {
  require(channels % 2 == 0, "shuffle-a: channel count must be even");
  const std::size_t h = channels / 2;
  return {ConvWeights::zeros(h, h, 1), ConvWeights::zeros(h, h, 3, h),
          ConvWeights::zeros(h, h, 1)};
}

ShuffleAWeights ShuffleAWeights::identity(std::size_t channels) {
  require(channels % 2 == 0, "shuffle-a: channel count must be even");
  const std::size_t h = channels / 2;
  return {ConvWeights::identity(h, 1), ConvWeights::identity(h, 3, h),
          ConvWeights::identity(h, 1)};
}

ShuffleAWeights ShuffleAWeights::random(std::size_t channels, std::uint64_t seed) {
  require(channels % 2 == 0, "shuffle-a: channel count must be even");
  const std::size_t h = channels / 2;
  return {ConvWeights::random(h, h, 1, 1, seed), ConvWeights::random(h, h, 3, h, seed + 1),
          ConvWeights::random(h, h, 1, 1, seed + 2)};
}

namespace {

FeatureMap channel_slice(const FeatureMap& x, std::size_t begin, std::size_t count) {
  const std::size_t plane = x.height * x.width;
  FeatureMap y(count, x.height, x.width);
  std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(begin * plane), count * plane,
              y.data.begin());
  return y;
}

FeatureMap pw_dw_pw(const FeatureMap& x, const ConvWeights& pw1, const ConvWeights& dw,
                    const ConvWeights& pw2, std::size_t stride) {
  return relu(conv2d(conv2d(relu(conv2d(x, pw1)), dw, stride), pw2));
}

}  // namespace

FeatureMap shuffle_a_concat(const FeatureMap& x, const ShuffleAWeights& w) {
  require(x.channels % 2 == 0 && x.channels > 0, "shuffle-a: channel count must be even");
  const std::size_t h = x.channels / 2;
  require(w.pw1.in_channels == h && w.pw2.out_channels == h,
          "shuffle-a: weights sized for " + std::to_string(2 * w.pw1.in_channels) +
              " channels, input has " + std::to_string(x.channels));
  const FeatureMap kept = channel_slice(x, 0, h);
  const FeatureMap conv = pw_dw_pw(channel_slice(x, h, h), w.pw1, w.dw, w.pw2, 1);
  return concat_channels(kept, conv);
}

FeatureMap shuffle_a_forward(const FeatureMap& x, const ShuffleAWeights& w) {
  return channel_shuffle(shuffle_a_concat(x, w), 2);
}

ShuffleBWeights ShuffleBWeights::random(std::size_t in, std::size_t out,
                                        std::uint64_t seed) {
  require(out % 2 == 0, "shuffle-b: output channel count must be even");
  const std::size_t h = out / 2;
  return {ConvWeights::random(in, in, 3, in, seed),
          ConvWeights::random(h, in, 1, 1, seed + 1),
          ConvWeights::random(h, in, 1, 1, seed + 2),
          ConvWeights::random(h, h, 3, h, seed + 3),
          ConvWeights::random(h, h, 1, 1, seed + 4)};
}

FeatureMap shuffle_b_concat(const FeatureMap& x, const ShuffleBWeights& w,
                            std::size_t stride) {
  require(w.b1_dw.in_channels == x.channels && w.b2_pw1.in_channels == x.channels,
          "shuffle-b: weights expect " + std::to_string(w.b1_dw.in_channels) +
              " input channels, got " + std::to_string(x.channels));
  const FeatureMap left = relu(conv2d(conv2d(x, w.b1_dw, stride), w.b1_pw));
  const FeatureMap right = pw_dw_pw(x, w.b2_pw1, w.b2_dw, w.b2_pw2, stride);
  return concat_channels(left, right);
}

FeatureMap shuffle_b_forward(const FeatureMap& x, const ShuffleBWeights& w,
                             std::size_t stride) {
  return channel_shuffle(shuffle_b_concat(x, w, stride), 2);
}

// ---------------------------------------------------------------------------
// Symbolic description

std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Conv3x3: return "conv3x3";
    case LayerKind::ShuffleA: return "shuffle-a";
    case LayerKind::ShuffleB: return "shuffle-b";
    case LayerKind::HaBlock: return "ha-block";
    case LayerKind::Gem: return "gem";
    case LayerKind::Linear: return "linear";
  }
  return "?";
}

std::string_view to_string(Branch b) { return b == Branch::Global ? "global" : "local"; }
std::string_view to_string(Width w) { return w == Width::X1 ? "1x" : "2x"; }

std::optional<Width> parse_width(std::string_view s) {
  if (s == "1x" || s == "1") return Width::X1;
  if (s == "2x" || s == "2") return Width::X2;
  return std::nullopt;
}

NetSpec build_network(Width width) {
  const bool wide = width == Width::X2;
  const std::size_t conv1_out = wide ? 36 : 32;
  const std::size_t ch[3] = {wide ? 240u : 128u, wide ? 320u : 256u, wide ? 480u : 384u};
  const std::size_t reps[3] = {wide ? 8u : 7u, wide ? 11u : 10u, wide ? 8u : 7u};
  // Spatial size at the input of each stage, and the hard-attention region size.
  const std::size_t stage_h[3] = {80, 40, 20}, stage_w[3] = {32, 16, 8};
  const std::size_t region_h[3] = {24, 12, 6}, region_w[3] = {28, 14, 7};
  constexpr std::size_t kRegions = 4;

  NetSpec net;
  net.width = width;
  net.feature_dim = wide ? 960 : 512;
  auto add = [&](std::string name, LayerKind kind, Branch branch, std::size_t in,
                 std::size_t out, std::size_t stride, std::size_t repeat, std::size_t h,
                 std::size_t w, std::size_t regions = 1) {
    net.layers.push_back({std::move(name), kind, branch, in, out, stride, repeat, h, w,
                          regions});
  };

  add("conv1", LayerKind::Conv3x3, Branch::Global, 3, conv1_out, 2, 1, 160, 64);
  std::size_t prev = conv1_out, local_prev = conv1_out;
  for (int s = 0; s < 3; ++s) {
    const std::string stage = "stage" + std::to_string(s + 1);
    const std::size_t h = stage_h[s], w = stage_w[s];
    add(stage + ".entry", LayerKind::ShuffleB, Branch::Global, prev, ch[s], 1, 1, h, w);
    add(stage + ".body", LayerKind::ShuffleA, Branch::Global, ch[s], ch[s], 1, reps[s], h, w);
    add(stage + ".down", LayerKind::ShuffleB, Branch::Global, ch[s], ch[s], 2, 1, h, w);
    add("soft-attn" + std::to_string(s + 1), LayerKind::HaBlock, Branch::Global, ch[s],
        ch[s], 1, 1, h / 2, w / 2);
    add("hard-attn" + std::to_string(s + 1), LayerKind::ShuffleB, Branch::Local,
        local_prev, ch[s], 2, 1, region_h[s], region_w[s], kRegions);
    prev = ch[s];
    local_prev = ch[s];
  }
  add("pool.global", LayerKind::Gem, Branch::Global, ch[2], ch[2], 1, 1, 10, 4);
  add("pool.local", LayerKind::Gem, Branch::Local, ch[2], ch[2], 1, 1, 3, 4, kRegions);
  add("fc.global", LayerKind::Linear, Branch::Global, ch[2], net.feature_dim, 1, 1, 1, 1);
  add("fc.local", LayerKind::Linear, Branch::Local, kRegions * ch[2], net.feature_dim, 1,
      1, 1, 1);
  return net;
}

Shape3 output_shape(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::Conv3x3:
    case LayerKind::ShuffleA:
    case LayerKind::ShuffleB:
      return {l.out_channels, ceil_div(l.in_h, l.stride), ceil_div(l.in_w, l.stride)};
    case LayerKind::HaBlock:
      return {l.out_channels, l.in_h, l.in_w};
    case LayerKind::Gem:
    case LayerKind::Linear:
      return {l.out_channels, 1, 1};
  }
  return {};
}

std::vector<std::string> check_chain(const NetSpec& spec) {
  std::vector<std::string> problems;
  auto fail = [&](const LayerSpec& l, const std::string& what) {
    problems.push_back(l.name + ": " + what);
  };
  std::optional<Shape3> global, local, stage_input;
  std::size_t local_regions = 1;
  for (const auto& l : spec.layers) {
    const Shape3 in{l.in_channels, l.in_h, l.in_w};
    if (l.kind == LayerKind::ShuffleA && (l.in_channels != l.out_channels || l.in_channels % 2))
      fail(l, "shuffle-a needs in == out and an even channel count");
    if ((l.kind == LayerKind::ShuffleA || l.kind == LayerKind::ShuffleB) && l.out_channels % 2)
      fail(l, "odd output channel count");
    if (l.stride != 1 && l.stride != 2) fail(l, "stride must be 1 or 2");
    if (l.repeat == 0) fail(l, "repeat must be positive");

    std::optional<Shape3>& cur = l.branch == Branch::Global ? global : local;
    if (l.branch == Branch::Global) {
      if (cur && !(*cur == in))
        fail(l, "expects " + dims(in.channels, in.height, in.width) + ", previous layer gives " +
                    dims(cur->channels, cur->height, cur->width));
      if (l.kind == LayerKind::ShuffleB && l.stride == 1) stage_input = in;
    } else if (!cur) {
      // First local layer: regions cropped from the current stage input.
      if (!stage_input)
        fail(l, "no global stage precedes the first local layer");
      else if (l.in_channels != stage_input->channels || l.in_h > stage_input->height ||
               l.in_w > stage_input->width)
        fail(l, "region " + dims(in.channels, in.height, in.width) + " does not fit in " +
                    dims(stage_input->channels, stage_input->height, stage_input->width));
      local_regions = l.regions;
    } else if (l.kind == LayerKind::Linear) {
      const std::size_t want = cur->channels * local_regions;
      if (l.in_channels != want || l.in_h != 1 || l.in_w != 1)
        fail(l, "expects " + std::to_string(l.in_channels) + " inputs, " +
                    std::to_string(local_regions) + " regions give " + std::to_string(want));
    } else {
      if (!(*cur == in))
        fail(l, "expects " + dims(in.channels, in.height, in.width) + ", previous layer gives " +
                    dims(cur->channels, cur->height, cur->width));
      if (l.regions != local_regions) fail(l, "region count changes along the local branch");
    }
    // Repeated rows must map their output back onto their input.
    if (l.repeat > 1 && !(output_shape(l) == in)) fail(l, "repeated row is not shape preserving");
    cur = output_shape(l);
    if (l.kind == LayerKind::Linear && l.out_channels != spec.feature_dim)
      fail(l, "output " + std::to_string(l.out_channels) + " != feature dim " +
                  std::to_string(spec.feature_dim));
  }
  if (!global) problems.push_back("spec has no global branch");
  if (!local) problems.push_back("spec has no local branch");
  return problems;
}

// ---------------------------------------------------------------------------
// Counting

std::uint64_t conv_params(std::size_t k, std::size_t in, std::size_t out,
                          std::size_t groups, bool bias) {
  return static_cast<std::uint64_t>(k * k * in / groups * out) + (bias ? out : 0);
}

std::uint64_t linear_params(std::size_t in, std::size_t out, bool bias) {
  return static_cast<std::uint64_t>(in) * out + (bias ? out : 0);
}

namespace {

class Itemizer {
 public:
  explicit Itemizer(const CountOptions& o) : opt_(o) {}

  // Conv followed by BN.
  void conv(std::string name, std::size_t k, std::size_t in, std::size_t out,
            std::size_t groups, std::size_t out_h, std::size_t out_w) {
    const std::uint64_t hw = static_cast<std::uint64_t>(out_h) * out_w;
    std::uint64_t flops = static_cast<std::uint64_t>(k * k * in / groups) * out * hw;
    if (!opt_.bn_fused) flops += out * hw;
    items.push_back({std::move(name), conv_params(k, in, out, groups) + 2 * out, flops});
  }
  void op(std::string name, std::uint64_t params, std::uint64_t flops) {
    items.push_back({std::move(name), params, flops});
  }

  std::vector<CostItem> items;

 private:
  const CountOptions& opt_;
};

void shuffle_a_items(Itemizer& it, std::size_t c, std::size_t h, std::size_t w) {
  const std::size_t half = c / 2;
  it.conv("branch2.pw1", 1, half, half, 1, h, w);
  it.conv("branch2.dw3x3", 3, half, half, half, h, w);
  it.conv("branch2.pw2", 1, half, half, 1, h, w);
}

void shuffle_b_items(Itemizer& it, std::size_t in, std::size_t out, std::size_t stride,
                     std::size_t h, std::size_t w) {
  const std::size_t half = out / 2;
  const std::size_t oh = ceil_div(h, stride), ow = ceil_div(w, stride);
  it.conv("branch1.dw3x3", 3, in, in, in, oh, ow);
  it.conv("branch1.pw", 1, in, half, 1, oh, ow);
  it.conv("branch2.pw1", 1, in, half, 1, h, w);
  it.conv("branch2.dw3x3", 3, half, half, half, oh, ow);
  it.conv("branch2.pw2", 1, half, half, 1, oh, ow);
}

// Soft attention = channel squeeze-excite (reduction 16) times a spatial map
// from a strided 3x3 conv on the channel mean, fused by a 1x1 conv; hard
// attention regresses a translation per region from the pooled feature.
void ha_block_items(Itemizer& it, std::size_t c, std::size_t h, std::size_t w) {
  constexpr std::size_t kReduction = 16, kRegions = 4;
  const std::uint64_t chw = static_cast<std::uint64_t>(c) * h * w;
  const std::size_t r = std::max<std::size_t>(1, c / kReduction);
  it.op("channel.avgpool", 0, chw);
  it.conv("channel.squeeze", 1, c, r, 1, 1, 1);
  it.conv("channel.excite", 1, r, c, 1, 1, 1);
  it.op("spatial.channel-mean", 0, chw);
  it.conv("spatial.conv3x3", 3, 1, 1, 1, ceil_div(h, 2), ceil_div(w, 2));
  it.op("spatial.upsample", 0, 4ull * h * w);
  it.conv("spatial.scale1x1", 1, 1, 1, 1, h, w);
  it.conv("fuse.conv1x1", 1, c, c, 1, h, w);
  it.op("apply", 0, chw);
  it.op("hard.regressor", linear_params(c, 2 * kRegions), 2ull * kRegions * c);
}

}  // namespace

std::vector<LayerCost> breakdown(const NetSpec& spec, const CountOptions& options) {
  std::vector<LayerCost> rows;
  for (const auto& l : spec.layers) {
    Itemizer it(options);
    switch (l.kind) {
      case LayerKind::Conv3x3:
        it.conv("conv3x3", 3, l.in_channels, l.out_channels, 1, ceil_div(l.in_h, l.stride),
                ceil_div(l.in_w, l.stride));
        break;
      case LayerKind::ShuffleA:
        shuffle_a_items(it, l.in_channels, l.in_h, l.in_w);
        break;
      case LayerKind::ShuffleB:
        shuffle_b_items(it, l.in_channels, l.out_channels, l.stride, l.in_h, l.in_w);
        break;
      case LayerKind::HaBlock:
        ha_block_items(it, l.in_channels, l.in_h, l.in_w);
        break;
      case LayerKind::Gem:
        it.op("gem", l.in_channels, static_cast<std::uint64_t>(l.in_channels) * l.in_h * l.in_w);
        break;
      case LayerKind::Linear:
        it.op("linear", linear_params(l.in_channels, l.out_channels),
              static_cast<std::uint64_t>(l.in_channels) * l.out_channels);
        break;
    }
    LayerCost row;
    row.name = l.name;
    row.kind = l.kind;
    row.branch = l.branch;
    row.assumption_based = l.kind == LayerKind::HaBlock;
    const std::uint64_t mult = options.convention == FlopConvention::TwoMac ? 2 : 1;
    for (auto& item : it.items) {
      // Weights are shared across regions; the work is not.
      item.params *= l.repeat;
      item.flops *= l.repeat * l.regions * mult;
      row.params += item.params;
      row.flops += item.flops;
    }
    row.items = std::move(it.items);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::uint64_t count_params(const NetSpec& spec, const CountOptions& options) {
  std::uint64_t total = 0;
  for (const auto& row : breakdown(spec, options)) total += row.params;
  return total;
}

std::uint64_t count_flops(const NetSpec& spec, const CountOptions& options) {
  std::uint64_t total = 0;
  for (const auto& row : breakdown(spec, options)) total += row.flops;
  return total;
}

ReferenceTotals reference_totals(Width width) {
  return width == Width::X1 ? ReferenceTotals{2.9e6, 0.72e9} : ReferenceTotals{6.4e6, 1.68e9};
}

}  // namespace reidlab::arch
