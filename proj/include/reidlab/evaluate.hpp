#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "reidlab/matrix.hpp"

namespace reidlab {

enum class Metric { Euclidean, Cosine };
std::optional<Metric> parse_metric(std::string_view name);

// Q×G distances between the rows of `queries` and `gallery`. Cosine distance
// is 1 - cos; a zero row is at distance 1 from everything.
Matrix distance_matrix(const Matrix& queries, const Matrix& gallery,
                       Metric metric = Metric::Euclidean);

struct EvalResult {
  std::vector<double> cmc;  // cmc[k-1] = rank-k accuracy
  double map = 0.0;
  std::vector<double> ap;  // per query; NaN for queries without a valid match
  std::size_t valid_queries = 0;

  double rank1() const { return cmc.empty() ? 0.0 : cmc[0]; }
};

// Single-query protocol: gallery entries sharing both id and camera with the
// query are dropped, the rest ranked by ascending distance with ties broken
// by gallery index. Throws when no query has a valid match.
EvalResult evaluate_reid(const Matrix& distmat, std::span<const int> q_ids,
                         std::span<const int> g_ids, std::span<const int> q_cams,
                         std::span<const int> g_cams, std::size_t k_max = 20);

}  // namespace reidlab
