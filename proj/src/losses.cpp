#include "reidlab/losses.hpp"

#include <stdexcept>
#include <string>

namespace reidlab {

std::optional<TripletVariant> parse_triplet_variant(std::string_view name) {
  if (name == "naive") return TripletVariant::Naive;
  if (name == "batch-hard") return TripletVariant::BatchHard;
  if (name == "batch-soft") return TripletVariant::BatchSoft;
  if (name == "soft-margin") return TripletVariant::SoftMargin;
  return std::nullopt;
}

std::string_view to_string(TripletVariant v) {
  switch (v) {
    case TripletVariant::Naive: return "naive";
    case TripletVariant::BatchHard: return "batch-hard";
    case TripletVariant::BatchSoft: return "batch-soft";
    case TripletVariant::SoftMargin: return "soft-margin";
  }
  return "?";
}

namespace {

void check_distmat(const Tensor& distmat, std::span<const int> ids,
                   std::string_view who) {
  if (!distmat.defined() || distmat.rank() != 2 ||
      distmat.dim(0) != distmat.dim(1) || distmat.dim(0) != ids.size())
    throw std::invalid_argument(std::string(who) +
                                ": distance matrix must be B×B with B = " +
                                std::to_string(ids.size()) + " labels");
}

}  // namespace

Tensor pairwise_distances(const EmbeddingBatch& batch, Distance distance) {
  const Tensor& x = batch.embeddings;
  if (!x.defined() || x.rank() != 2 || x.dim(0) < 2)
    throw std::invalid_argument("pairwise_distances: need a B×D batch, B >= 2");
  return pairwise_distance(x, distance == Distance::SquaredEuclidean);
}

Tensor triplet_naive(const Tensor& d_ap, const Tensor& d_an, double margin) {
  return relu(add_scalar(sub(d_ap, d_an), margin));
}

AnchorMasks anchor_masks(std::span<const int> ids) {
  const std::size_t b = ids.size();
  AnchorMasks m;
  m.positive.assign(b * b, 0.0);
  m.negative.assign(b * b, 0.0);
  for (std::size_t a = 0; a < b; ++a) {
    bool has_pos = false, has_neg = false;
    for (std::size_t j = 0; j < b; ++j) {
      if (j == a) continue;
      if (ids[j] == ids[a]) {
        m.positive[a * b + j] = 1.0;
        has_pos = true;
      } else {
        m.negative[a * b + j] = 1.0;
        has_neg = true;
      }
    }
    if (!has_pos)
      throw std::invalid_argument("triplet: anchor " + std::to_string(a) +
                                  " has no positive");
    if (!has_neg)
      throw std::invalid_argument("triplet: anchor " + std::to_string(a) +
                                  " has no negative");
  }
  return m;
}

HardTerms hard_terms(const Tensor& distmat, std::span<const int> ids) {
  check_distmat(distmat, ids, "batch-hard");
  const auto masks = anchor_masks(ids);
  const std::size_t b = ids.size();
  HardTerms t;
  t.pos_index.resize(b);
  t.neg_index.resize(b);
  auto d = distmat.values();
  for (std::size_t a = 0; a < b; ++a) {
    std::size_t best_p = b, best_n = b;
    for (std::size_t j = 0; j < b; ++j) {
      const std::size_t k = a * b + j;
      if (masks.positive[k] != 0.0 && (best_p == b || d[k] > d[a * b + best_p]))
        best_p = j;
      if (masks.negative[k] != 0.0 && (best_n == b || d[k] < d[a * b + best_n]))
        best_n = j;
    }
    t.pos_index[a] = a * b + best_p;
    t.neg_index[a] = a * b + best_n;
  }
  t.hardest_pos = gather(distmat, t.pos_index);
  t.hardest_neg = gather(distmat, t.neg_index);
  return t;
}

Tensor triplet_batch_hard(const Tensor& distmat, std::span<const int> ids,
                          double margin) {
  const HardTerms t = hard_terms(distmat, ids);
  return mean(triplet_naive(t.hardest_pos, t.hardest_neg, margin));
}

SoftTerms soft_weighted_terms(const Tensor& distmat, std::span<const int> ids) {
  check_distmat(distmat, ids, "batch-soft");
  const auto masks = anchor_masks(ids);
  SoftTerms t;
  t.pos_weights = masked_softmax(distmat, masks.positive, 1);
  t.neg_weights = masked_softmax(neg(distmat), masks.negative, 1);
  t.weighted_pos = sum_axis(mul(t.pos_weights, distmat), 1);
  t.weighted_neg = sum_axis(mul(t.neg_weights, distmat), 1);
  return t;
}

Tensor triplet_batch_soft(const Tensor& distmat, std::span<const int> ids,
                          double margin) {
  const SoftTerms t = soft_weighted_terms(distmat, ids);
  return mean(triplet_naive(t.weighted_pos, t.weighted_neg, margin));
}

Tensor triplet_soft_margin(const Tensor& distmat, std::span<const int> ids) {
  const SoftTerms t = soft_weighted_terms(distmat, ids);
  return mean(softplus(sub(t.weighted_pos, t.weighted_neg)));
}

namespace {

// Original triplet loss averaged over every valid (a, p, n) in the batch.
Tensor triplet_all(const Tensor& distmat, std::span<const int> ids,
                   double margin) {
  check_distmat(distmat, ids, "naive");
  const auto masks = anchor_masks(ids);
  const std::size_t b = ids.size();
  std::vector<double> valid(b * b * b, 0.0);
  double count = 0.0;
  for (std::size_t a = 0; a < b; ++a)
    for (std::size_t p = 0; p < b; ++p)
      for (std::size_t n = 0; n < b; ++n)
        if (masks.positive[a * b + p] != 0.0 && masks.negative[a * b + n] != 0.0) {
          valid[(a * b + p) * b + n] = 1.0;
          count += 1.0;
        }
  const Tensor d_ap = reshape(distmat, {b, b, 1});
  const Tensor d_an = reshape(distmat, {b, 1, b});
  const Tensor per = triplet_naive(d_ap, d_an, margin);
  const Tensor masked = mul(per, Tensor::from({b, b, b}, std::move(valid)));
  return mul_scalar(sum(masked), 1.0 / count);
}

}  // namespace

Tensor triplet_loss(const Tensor& distmat, std::span<const int> ids,
                    const TripletConfig& cfg) {
  switch (cfg.variant) {
    case TripletVariant::Naive: return triplet_all(distmat, ids, cfg.margin);
    case TripletVariant::BatchHard:
      return triplet_batch_hard(distmat, ids, cfg.margin);
    case TripletVariant::BatchSoft:
      return triplet_batch_soft(distmat, ids, cfg.margin);
    case TripletVariant::SoftMargin: return triplet_soft_margin(distmat, ids);
  }
  throw std::invalid_argument("triplet_loss: unknown variant");
}

std::vector<double> smoothed_targets(std::span<const int> targets,
                                     const SmoothingConfig& cfg) {
  if (!(cfg.epsilon >= 0.0 && cfg.epsilon < 1.0))
    throw std::invalid_argument("label smoothing: epsilon must be in [0, 1)");
  const std::size_t c = cfg.classes;
  if (c == 0) throw std::invalid_argument("label smoothing: zero classes");
  if (c == 1 && cfg.epsilon > 0.0)
    throw std::invalid_argument("label smoothing: epsilon > 0 needs >= 2 classes");
  const double off = c > 1 ? cfg.epsilon / static_cast<double>(c - 1) : 0.0;
  std::vector<double> q(targets.size() * c, off);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const int t = targets[i];
    if (t < 0 || static_cast<std::size_t>(t) >= c)
      throw std::invalid_argument("label smoothing: target " +
                                  std::to_string(t) + " out of range [0," +
                                  std::to_string(c) + ")");
    q[i * c + static_cast<std::size_t>(t)] = 1.0 - cfg.epsilon;
  }
  return q;
}

Tensor cross_entropy_smoothed(const Tensor& logits, std::span<const int> targets,
                              const SmoothingConfig& cfg) {
  if (!logits.defined() || logits.rank() != 2 ||
      logits.dim(0) != targets.size() || logits.dim(1) != cfg.classes)
    throw std::invalid_argument(
        "cross_entropy_smoothed: logits must be B×C matching targets and C");
  const std::size_t b = logits.dim(0);
  Tensor q = Tensor::from(logits.shape(), smoothed_targets(targets, cfg));
  return mul_scalar(sum(mul(q, log_softmax(logits, 1))),
                    -1.0 / static_cast<double>(b));
}

}  // namespace reidlab
