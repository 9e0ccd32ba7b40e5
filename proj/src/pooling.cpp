#include "reidlab/pooling.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace reidlab {

GemLayer GemLayer::per_channel(std::size_t channels, double p0) {
  if (channels == 0) throw std::invalid_argument("GemLayer: zero channels");
  if (!(p0 > 0.0)) throw std::invalid_argument("GemLayer: p must be > 0");
  return GemLayer(Tensor::full({channels}, p0, true));
}

GemLayer GemLayer::shared(double p0) {
  if (!(p0 > 0.0)) throw std::invalid_argument("GemLayer: p must be > 0");
  return GemLayer(Tensor::full({1}, p0, true));
}

void GemLayer::project() {
  for (auto& v : p_.mutable_values()) v = std::max(v, kMinP);
}

Tensor gem_pool(const Tensor& features, const GemLayer& layer) {
  if (!features.defined() || (features.rank() != 2 && features.rank() != 3))
    throw std::invalid_argument("gem_pool: expected C×N or B×C×N features");
  const std::size_t r = features.rank();
  const std::size_t channels = features.dim(r - 2);
  if (features.dim(r - 1) == 0)
    throw std::invalid_argument("gem_pool: empty channel");
  if (!layer.is_shared() && layer.p().numel() != channels)
    throw std::invalid_argument(
        "gem_pool: " + std::to_string(layer.p().numel()) +
        " exponents for " + std::to_string(channels) + " channels");

  Tensor p = layer.p();
  if (!layer.is_shared())
    p = reshape(p, r == 2 ? Shape{channels, 1} : Shape{1, channels, 1});
  const Tensor clamped = clamp_min(features, layer.epsilon());
  const Tensor powered = pow(clamped, p);
  const Tensor avg = mean_axis(powered, r - 1, /*keepdim=*/true);
  const Tensor inv_p = div(Tensor::scalar(1.0), p);
  const Tensor pooled = pow(avg, inv_p);
  return reshape(pooled, r == 2 ? Shape{channels}
                                : Shape{features.dim(0), channels});
}

}  // namespace reidlab
