#pragma once

// Shuffle-block forward passes on small concrete tensors, and a symbolic
// description of the two-branch network with parameter / FLOP accounting.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace reidlab::arch {

struct FeatureMap {
  std::size_t channels = 0, height = 0, width = 0;
  std::vector<double> data;  // C×H×W

  FeatureMap() = default;
  FeatureMap(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}
  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return data[(c * height + y) * width + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * height + y) * width + x];
  }
  bool operator==(const FeatureMap&) const = default;
};

// Square convolution with zero padding kernel/2. BN is assumed folded into
// the bias.
struct ConvWeights {
  std::size_t out_channels = 0, in_channels = 0, kernel = 1, groups = 1;
  std::vector<double> weight;  // out × (in/groups) × k × k
  std::vector<double> bias;    // out

  static ConvWeights zeros(std::size_t out, std::size_t in, std::size_t kernel,
                           std::size_t groups = 1);
  // Passes channel c straight to channel c (needs out == in).
  static ConvWeights identity(std::size_t channels, std::size_t kernel,
                              std::size_t groups = 1);
  static ConvWeights random(std::size_t out, std::size_t in, std::size_t kernel,
                            std::size_t groups, std::uint64_t seed);
};

FeatureMap conv2d(const FeatureMap& x, const ConvWeights& w, std::size_t stride = 1);
FeatureMap relu(FeatureMap x);
FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b);

// Output channel k takes input channel perm[k], the transpose of the
// (groups, C/groups) channel grid.
std::vector<std::size_t> shuffle_permutation(std::size_t channels, std::size_t groups);
FeatureMap channel_shuffle(const FeatureMap& x, std::size_t groups = 2);

// Shuffle-A: the first half of the channels passes through; the second half
// runs 1x1 -> ReLU -> depthwise 3x3 -> 1x1 -> ReLU.
struct ShuffleAWeights {
  ConvWeights pw1, dw, pw2;

  static ShuffleAWeights zeros(std::size_t channels);
  static ShuffleAWeights identity(std::size_t channels);
  static ShuffleAWeights random(std::size_t channels, std::uint64_t seed);
};

// Before the channel shuffle.
FeatureMap shuffle_a_concat(const FeatureMap& x, const ShuffleAWeights& w);
FeatureMap shuffle_a_forward(const FeatureMap& x, const ShuffleAWeights& w);

// Shuffle-B: branch one runs depthwise 3x3 (stride s) -> 1x1 -> ReLU on the
// full input; branch two runs 1x1 -> ReLU -> depthwise 3x3 (stride s) ->
// 1x1 -> ReLU. Each branch emits out/2 channels.
struct ShuffleBWeights {
  ConvWeights b1_dw, b1_pw, b2_pw1, b2_dw, b2_pw2;

  static ShuffleBWeights random(std::size_t in, std::size_t out, std::uint64_t seed);
};

FeatureMap shuffle_b_concat(const FeatureMap& x, const ShuffleBWeights& w,
                            std::size_t stride);
FeatureMap shuffle_b_forward(const FeatureMap& x, const ShuffleBWeights& w,
                             std::size_t stride);

// ---------------------------------------------------------------------------
// Symbolic network description

enum class LayerKind { Conv3x3, ShuffleA, ShuffleB, HaBlock, Gem, Linear };
enum class Branch { Global, Local };
enum class Width { X1, X2 };

std::string_view to_string(LayerKind k);
std::string_view to_string(Branch b);
std::string_view to_string(Width w);
std::optional<Width> parse_width(std::string_view s);

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::Conv3x3;
  Branch branch = Branch::Global;
  std::size_t in_channels = 0, out_channels = 0;
  std::size_t stride = 1;
  std::size_t repeat = 1;
  std::size_t in_h = 0, in_w = 0;
  std::size_t regions = 1;  // hard-attention regions processed with shared weights
};

struct NetSpec {
  Width width = Width::X1;
  std::vector<LayerSpec> layers;
  std::size_t feature_dim = 0;  // per branch FC output
};

NetSpec build_network(Width width);

struct Shape3 {
  std::size_t channels = 0, height = 0, width = 0;
  bool operator==(const Shape3&) const = default;
};

// Output of one application of the layer (per region for local rows).
Shape3 output_shape(const LayerSpec& layer);

// Exact shape chaining over both branches. Empty when consistent.
std::vector<std::string> check_chain(const NetSpec& spec);

enum class FlopConvention { Mac, TwoMac };

struct CountOptions {
  bool bn_fused = true;  // exclude BN from FLOPs
  FlopConvention convention = FlopConvention::Mac;
};

struct CostItem {
  std::string name;
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
};

struct LayerCost {
  std::string name;
  LayerKind kind = LayerKind::Conv3x3;
  Branch branch = Branch::Global;
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
  // True for rows whose internals follow the assumed attention design.
  bool assumption_based = false;
  std::vector<CostItem> items;
};

std::vector<LayerCost> breakdown(const NetSpec& spec, const CountOptions& options = {});
std::uint64_t count_params(const NetSpec& spec, const CountOptions& options = {});
std::uint64_t count_flops(const NetSpec& spec, const CountOptions& options = {});

// Reference totals reported for the two widths.
struct ReferenceTotals {
  double params;
  double flops;
};
ReferenceTotals reference_totals(Width width);

// Single-layer helpers.
std::uint64_t conv_params(std::size_t k, std::size_t in, std::size_t out,
                          std::size_t groups = 1, bool bias = true);
std::uint64_t linear_params(std::size_t in, std::size_t out, bool bias = true);

}  // namespace reidlab::arch
