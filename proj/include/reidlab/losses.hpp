#pragma once

// Triplet-loss family over PK-sampled embedding batches, plus label-smoothed
// cross-entropy.
//
// All batch losses anchor on every row. For anchor a, P(a) holds the other
// rows sharing its identity and N(a) the rows with a different identity.

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "reidlab/tensor.hpp"

namespace reidlab {

enum class Distance { Euclidean, SquaredEuclidean };
enum class TripletVariant { Naive, BatchHard, BatchSoft, SoftMargin };

std::optional<TripletVariant> parse_triplet_variant(std::string_view name);
std::string_view to_string(TripletVariant v);

struct EmbeddingBatch {
  Tensor embeddings;  // B×D
  std::vector<int> ids;
  std::vector<int> cams;  // optional, may be empty
};

struct TripletConfig {
  TripletVariant variant = TripletVariant::SoftMargin;
  double margin = 0.3;  // not read by the soft-margin variant
  Distance distance = Distance::Euclidean;
};

struct SmoothingConfig {
  double epsilon = 0.1;
  std::size_t classes = 0;
};

// B×B distance matrix; symmetric with an exact zero diagonal.
Tensor pairwise_distances(const EmbeddingBatch& batch,
                          Distance distance = Distance::Euclidean);

// [m + d_ap - d_an]_+ elementwise.
Tensor triplet_naive(const Tensor& d_ap, const Tensor& d_an, double margin);

// Mean over anchors of [m + max_P d - min_N d]_+.
Tensor triplet_batch_hard(const Tensor& distmat, std::span<const int> ids,
                          double margin);

// Mean over anchors of [m + sum_P w_p d - sum_N w_n d]_+ with
// w_p = softmax_P(d) and w_n = softmax_N(-d).
Tensor triplet_batch_soft(const Tensor& distmat, std::span<const int> ids,
                          double margin);

// Mean over anchors of softplus(sum_P w_p d - sum_N w_n d).
Tensor triplet_soft_margin(const Tensor& distmat, std::span<const int> ids);

Tensor triplet_loss(const Tensor& distmat, std::span<const int> ids,
                    const TripletConfig& cfg);

// Per-anchor soft-weighted positive and negative distances (length B each).
struct SoftTerms {
  Tensor weighted_pos;
  Tensor weighted_neg;
  Tensor pos_weights;  // B×B, zero outside P(a)
  Tensor neg_weights;  // B×B, zero outside N(a)
};
SoftTerms soft_weighted_terms(const Tensor& distmat, std::span<const int> ids);

// Per-anchor hardest positive / negative distances (length B each).
struct HardTerms {
  Tensor hardest_pos;
  Tensor hardest_neg;
  std::vector<std::size_t> pos_index;
  std::vector<std::size_t> neg_index;
};
HardTerms hard_terms(const Tensor& distmat, std::span<const int> ids);

// 1 on every (a, p) with p in P(a) / (a, n) with n in N(a), else 0. Throws
// std::invalid_argument naming the first anchor lacking a positive or a
// negative.
struct AnchorMasks {
  std::vector<double> positive;
  std::vector<double> negative;
};
AnchorMasks anchor_masks(std::span<const int> ids);

// Smoothed target: 1 - eps on the true class, eps / (C - 1) elsewhere.
std::vector<double> smoothed_targets(std::span<const int> targets,
                                     const SmoothingConfig& cfg);

// Mean over rows of -sum_c q_c log softmax(logits)_c.
Tensor cross_entropy_smoothed(const Tensor& logits, std::span<const int> targets,
                              const SmoothingConfig& cfg);

}  // namespace reidlab
