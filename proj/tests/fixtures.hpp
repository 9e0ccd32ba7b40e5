#pragma once

// Random inputs shared by the unit tests and the acceptance runner.

#include <cstddef>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "reidlab/losses.hpp"
#include "reidlab/matrix.hpp"
#include "reidlab/tensor.hpp"
#include "reidlab/tracksim.hpp"

namespace fixture {

struct PkBatch {
  oracle::Rows rows;
  std::vector<int> ids;
  reidlab::Tensor tensor;
};

// P identities × K rows each, unit-normalized, ids shuffled across rows.
inline PkBatch pk_batch(std::size_t p, std::size_t k, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  PkBatch b;
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < k; ++j) b.ids.push_back(static_cast<int>(i));
  std::shuffle(b.ids.begin(), b.ids.end(), rng);
  std::vector<double> flat;
  for (std::size_t r = 0; r < b.ids.size(); ++r) {
    std::vector<double> v(dim);
    double n = 0.0;
    for (auto& x : v) {
      x = z(rng);
      n += x * x;
    }
    for (auto& x : v) x /= std::sqrt(n);
    flat.insert(flat.end(), v.begin(), v.end());
    b.rows.push_back(std::move(v));
  }
  b.tensor = reidlab::Tensor::from({b.ids.size(), dim}, flat, true);
  return b;
}

inline oracle::Rows to_rows(const reidlab::Matrix& m) {
  oracle::Rows r(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) r[i].assign(m.row(i).begin(), m.row(i).end());
  return r;
}

inline reidlab::Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  reidlab::Matrix m(rows, cols);
  for (auto& v : m.data) v = z(rng);
  return m;
}

// Tracking micro-cases with hand-computed scores.
struct TrackCase {
  const char* name;
  std::vector<reidlab::track::Observation> obs;
  double mota;
  double idf1;
};

inline std::vector<TrackCase> track_cases() {
  using reidlab::track::Observation;
  std::vector<TrackCase> out;

  // One person over 100 frames: track 0 then track 1 from frame 50, frames
  // 10 and 11 missed, one false positive. MOTA = 1 - (2 + 1 + 1) / 100.
  // IDTP = 50 (track 1), IDFN = 50, IDFP = 49 (48 on track 0 plus the FP).
  TrackCase a{"100 gt, 2 misses, 1 fp, 1 switch", {}, 0.96, 100.0 / 199.0};
  for (std::size_t f = 0; f < 100; ++f) {
    int track = f < 50 ? 0 : 1;
    if (f == 10 || f == 11) track = -1;
    a.obs.push_back({f, 0, track, 0});
  }
  a.obs.push_back({30, -1, 5, 0});
  out.push_back(a);

  // Two people, each fully tracked by their own track.
  TrackCase b{"perfect assignment", {}, 1.0, 1.0};
  for (std::size_t f = 0; f < 10; ++f) {
    b.obs.push_back({f, 0, 3, 0});
    b.obs.push_back({f, 1, 8, 0});
  }
  out.push_back(b);

  // Two people whose tracks swap halfway: every overlap is 5, so the best
  // matching keeps half of each. One switch per person gives MOTA 0.9.
  TrackCase c{"crossed half/half", {}, 0.9, 0.5};
  for (std::size_t f = 0; f < 10; ++f) {
    c.obs.push_back({f, 0, f < 5 ? 0 : 1, 0});
    c.obs.push_back({f, 1, f < 5 ? 1 : 0, 0});
  }
  out.push_back(c);
  return out;
}

}  // namespace fixture
