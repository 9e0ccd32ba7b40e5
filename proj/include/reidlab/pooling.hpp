#pragma once

#include <cstddef>

#include "reidlab/tensor.hpp"

namespace reidlab {

// Generalized-mean pooling with a learnable exponent:
//   gem(x_k) = ((1/n) sum_i x_i^{p_k})^{1/p_k}
// p = 1 gives the mean; p -> inf approaches the max.
class GemLayer {
 public:
  static constexpr double kInitialP = 3.0;
  static constexpr double kEpsilon = 1e-6;
  static constexpr double kMinP = 0.1;

  // One exponent per channel.
  static GemLayer per_channel(std::size_t channels, double p0 = kInitialP);
  // A single exponent shared by every channel.
  static GemLayer shared(double p0 = kInitialP);

  Tensor& p() { return p_; }
  const Tensor& p() const { return p_; }
  double epsilon() const { return epsilon_; }
  void set_epsilon(double eps) { epsilon_ = eps; }
  bool is_shared() const { return p_.numel() == 1; }

  // Clamps every exponent to at least kMinP; call after an optimizer step.
  void project();

 private:
  explicit GemLayer(Tensor p) : p_(std::move(p)) {}
  Tensor p_;
  double epsilon_ = kEpsilon;
};

// features: C×N (-> C) or B×C×N (-> B×C). Values below epsilon are clamped.
Tensor gem_pool(const Tensor& features, const GemLayer& layer);

}  // namespace reidlab
