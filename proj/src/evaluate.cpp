#include "reidlab/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace reidlab {

std::optional<Metric> parse_metric(std::string_view name) {
  if (name == "euclidean") return Metric::Euclidean;
  if (name == "cosine" || name == "cosine-distance") return Metric::Cosine;
  return std::nullopt;
}

Matrix distance_matrix(const Matrix& queries, const Matrix& gallery,
                       Metric metric) {
  if (queries.cols != gallery.cols)
    throw std::invalid_argument("distance_matrix: query dim " +
                                std::to_string(queries.cols) + " vs gallery dim " +
                                std::to_string(gallery.cols));
  Matrix out(queries.rows, gallery.rows);
  std::vector<double> g_norm(gallery.rows, 0.0);
  if (metric == Metric::Cosine)
    for (std::size_t j = 0; j < gallery.rows; ++j) {
      double ss = 0.0;
      for (double v : gallery.row(j)) ss += v * v;
      g_norm[j] = std::sqrt(ss);
    }
  for (std::size_t i = 0; i < queries.rows; ++i) {
    const auto q = queries.row(i);
    double q_norm = 0.0;
    if (metric == Metric::Cosine) {
      for (double v : q) q_norm += v * v;
      q_norm = std::sqrt(q_norm);
    }
    for (std::size_t j = 0; j < gallery.rows; ++j) {
      const auto g = gallery.row(j);
      if (metric == Metric::Euclidean) {
        double s = 0.0;
        for (std::size_t d = 0; d < q.size(); ++d) {
          const double diff = q[d] - g[d];
          s += diff * diff;
        }
        out(i, j) = std::sqrt(s);
      } else {
        double dot = 0.0;
        for (std::size_t d = 0; d < q.size(); ++d) dot += q[d] * g[d];
        const double denom = q_norm * g_norm[j];
        out(i, j) = denom > 0.0 ? 1.0 - dot / denom : 1.0;
      }
    }
  }
  return out;
}

EvalResult evaluate_reid(const Matrix& distmat, std::span<const int> q_ids,
                         std::span<const int> g_ids, std::span<const int> q_cams,
                         std::span<const int> g_cams, std::size_t k_max) {
  const std::size_t nq = distmat.rows, ng = distmat.cols;
  if (q_ids.size() != nq || q_cams.size() != nq || g_ids.size() != ng ||
      g_cams.size() != ng)
    throw std::invalid_argument("evaluate_reid: label sizes do not match the " +
                                std::to_string(nq) + "x" + std::to_string(ng) +
                                " distance matrix");
  if (k_max == 0) throw std::invalid_argument("evaluate_reid: k_max must be >= 1");

  EvalResult res;
  res.cmc.assign(k_max, 0.0);
  res.ap.assign(nq, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::size_t> order(ng);
  double ap_sum = 0.0;
  for (std::size_t q = 0; q < nq; ++q) {
    order.clear();
    for (std::size_t g = 0; g < ng; ++g)
      if (!(g_ids[g] == q_ids[q] && g_cams[g] == q_cams[q])) order.push_back(g);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return distmat(q, a) < distmat(q, b);
    });
    std::size_t hits = 0, first_hit = order.size();
    double precision_sum = 0.0;
    for (std::size_t r = 0; r < order.size(); ++r) {
      if (g_ids[order[r]] != q_ids[q]) continue;
      if (hits == 0) first_hit = r;
      ++hits;
      precision_sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
    if (hits == 0) continue;
    ++res.valid_queries;
    res.ap[q] = precision_sum / static_cast<double>(hits);
    ap_sum += res.ap[q];
    for (std::size_t k = first_hit; k < k_max; ++k) res.cmc[k] += 1.0;
  }
  if (res.valid_queries == 0)
    throw std::invalid_argument("evaluate_reid: no query has a valid gallery match");
  const double nv = static_cast<double>(res.valid_queries);
  for (auto& c : res.cmc) c /= nv;
  res.map = ap_sum / nv;
  return res;
}

}  // namespace reidlab
