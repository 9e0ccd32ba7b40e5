#pragma once

// Stochastic weight averaging with a diagonal Gaussian posterior (SWAG).
//
// Snapshots taken at cycle ends update running first and second moments.
// The mean is the SWA solution; sampling draws mean + scale * sigma * z.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace reidlab {

struct WeightSegment {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
  bool operator==(const WeightSegment&) const = default;
};

struct WeightLayout {
  std::vector<WeightSegment> segments;
  std::size_t total() const;
  void append(std::string name, std::size_t size);
  bool operator==(const WeightLayout&) const = default;
};

struct WeightVector {
  WeightLayout layout;
  std::vector<double> values;
};

struct DiagVariance {
  std::vector<double> values;
  std::size_t floored = 0;  // entries clamped to the variance floor
};

class SwagPosterior {
 public:
  static constexpr double kVarianceFloor = 1e-30;

  SwagPosterior() = default;
  explicit SwagPosterior(WeightLayout layout);

  // Equal-weight running update of both moments.
  void collect(const WeightVector& weights);

  std::size_t count() const { return n_; }
  const WeightLayout& layout() const { return layout_; }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& second_moment() const { return sq_mean_; }

  // max(E[w^2] - E[w]^2, floor).
  DiagVariance diag_variance() const;

  void save(const std::filesystem::path& path) const;
  static SwagPosterior load(const std::filesystem::path& path);

  // Rebuilds a posterior from stored moments.
  static SwagPosterior from_moments(WeightLayout layout, std::size_t n,
                                    std::vector<double> mean,
                                    std::vector<double> second_moment);

 private:
  WeightLayout layout_;
  std::size_t n_ = 0;
  std::vector<double> mean_;
  std::vector<double> sq_mean_;
};

SwagPosterior collect_snapshot(SwagPosterior posterior,
                               const WeightVector& weights);

WeightVector swa_weights(const SwagPosterior& posterior);

// mean + scale * sqrt(var) * z, z ~ N(0, I) from a generator seeded with
// `seed`. scale == 0 returns the mean unchanged.
WeightVector swag_sample(const SwagPosterior& posterior, double scale,
                         std::uint64_t seed);

// Seed for BMA sample i, derived from the root seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index);

using ModelEvaluator = std::function<std::vector<double>(
    const WeightVector& weights, const std::vector<double>& input)>;

struct BmaOptions {
  std::size_t samples = 8;
  double scale = 0.5;
  std::uint64_t seed = 0;
  bool renormalize = true;  // L2-normalize the averaged output
};

// Average of the model output over posterior samples.
std::vector<double> bma_predict(const SwagPosterior& posterior,
                                const ModelEvaluator& model,
                                const std::vector<double>& input,
                                const BmaOptions& options = {});

// Called on averaged weights so models with running normalization statistics
// can recompute them with one pass over the training data.
using RunningStatsRefresh = std::function<void(WeightVector&)>;

}  // namespace reidlab
