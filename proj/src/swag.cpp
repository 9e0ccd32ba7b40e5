#include "reidlab/swag.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <stdexcept>

namespace reidlab {

std::size_t WeightLayout::total() const {
  return segments.empty() ? 0
                          : segments.back().offset + segments.back().size;
}

void WeightLayout::append(std::string name, std::size_t size) {
  segments.push_back({std::move(name), total(), size});
}

SwagPosterior::SwagPosterior(WeightLayout layout)
    : layout_(std::move(layout)),
      mean_(layout_.total(), 0.0),
      sq_mean_(layout_.total(), 0.0) {}

void SwagPosterior::collect(const WeightVector& w) {
  if (!(w.layout == layout_) || w.values.size() != layout_.total())
    throw std::invalid_argument("swag: snapshot layout does not match posterior");
  ++n_;
  const double keep = static_cast<double>(n_ - 1) / static_cast<double>(n_);
  const double inv = 1.0 / static_cast<double>(n_);
  for (std::size_t i = 0; i < mean_.size(); ++i) {
    const double v = w.values[i];
    mean_[i] = mean_[i] * keep + v * inv;
    sq_mean_[i] = sq_mean_[i] * keep + v * v * inv;
  }
}

DiagVariance SwagPosterior::diag_variance() const {
  DiagVariance out;
  out.values.resize(mean_.size());
  for (std::size_t i = 0; i < mean_.size(); ++i) {
    const double v = sq_mean_[i] - mean_[i] * mean_[i];
    if (v < kVarianceFloor) {
      out.values[i] = kVarianceFloor;
      ++out.floored;
    } else {
      out.values[i] = v;
    }
  }
  return out;
}

SwagPosterior SwagPosterior::from_moments(WeightLayout layout, std::size_t n,
                                          std::vector<double> mean,
                                          std::vector<double> second_moment) {
  if (mean.size() != layout.total() || second_moment.size() != layout.total())
    throw std::invalid_argument("swag: moment size does not match layout");
  SwagPosterior p;
  p.layout_ = std::move(layout);
  p.n_ = n;
  p.mean_ = std::move(mean);
  p.sq_mean_ = std::move(second_moment);
  return p;
}

SwagPosterior collect_snapshot(SwagPosterior posterior,
                               const WeightVector& weights) {
  posterior.collect(weights);
  return posterior;
}

WeightVector swa_weights(const SwagPosterior& posterior) {
  if (posterior.count() == 0)
    throw std::invalid_argument("swa_weights: posterior has no snapshots");
  return {posterior.layout(), posterior.mean()};
}

WeightVector swag_sample(const SwagPosterior& posterior, double scale,
                         std::uint64_t seed) {
  WeightVector w = swa_weights(posterior);
  if (scale == 0.0) return w;
  const DiagVariance var = posterior.diag_variance();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < w.values.size(); ++i)
    w.values[i] += scale * std::sqrt(var.values[i]) * normal(rng);
  return w;
}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
  std::uint64_t z = root + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<double> bma_predict(const SwagPosterior& posterior,
                                const ModelEvaluator& model,
                                const std::vector<double>& input,
                                const BmaOptions& options) {
  if (options.samples == 0)
    throw std::invalid_argument("bma_predict: need at least one sample");
  std::vector<double> acc;
  for (std::size_t s = 0; s < options.samples; ++s) {
    const WeightVector w =
        swag_sample(posterior, options.scale, derive_seed(options.seed, s));
    const std::vector<double> out = model(w, input);
    if (acc.empty()) acc.assign(out.size(), 0.0);
    if (out.size() != acc.size())
      throw std::runtime_error("bma_predict: model output size changed");
    for (std::size_t i = 0; i < out.size(); ++i) acc[i] += out[i];
  }
  for (auto& v : acc) v /= static_cast<double>(options.samples);
  if (options.renormalize) {
    double ss = 0.0;
    for (double v : acc) ss += v * v;
    if (ss > 0.0) {
      const double nrm = std::sqrt(ss);
      for (auto& v : acc) v /= nrm;
    }
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Binary format, all integers and doubles little-endian:
//   "RLSWAG01" magic, u32 version, u32 segment count,
//   per segment {u32 name length, name bytes, u64 offset, u64 size},
//   u64 n, u64 dim, dim × f64 mean, dim × f64 second moment.

namespace {

constexpr std::array<char, 8> kMagic = {'R', 'L', 'S', 'W', 'A', 'G', '0', '1'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <class U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i)
      buf_.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
  }
  void f64(double d) { uint(std::bit_cast<std::uint64_t>(d)); }
  const std::vector<unsigned char>& data() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<unsigned char> buf) : buf_(std::move(buf)) {}
  void need(std::size_t n, const char* what) const {
    if (pos_ + n > buf_.size())
      throw std::runtime_error("swag posterior: truncated while reading " +
                               std::string(what) + " at offset " +
                               std::to_string(pos_));
  }
  template <class U>
  U uint(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<U>(buf_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }
  double f64(const char* what) {
    return std::bit_cast<double>(uint<std::uint64_t>(what));
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(buf_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  buf_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == buf_.size(); }

 private:
  std::vector<unsigned char> buf_;
  std::size_t pos_ = 0;
};

}  // namespace

void SwagPosterior::save(const std::filesystem::path& path) const {
  Writer w;
  w.bytes(kMagic.data(), kMagic.size());
  w.uint<std::uint32_t>(kVersion);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(layout_.segments.size()));
  for (const auto& seg : layout_.segments) {
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(seg.name.size()));
    w.bytes(seg.name.data(), seg.name.size());
    w.uint<std::uint64_t>(seg.offset);
    w.uint<std::uint64_t>(seg.size);
  }
  w.uint<std::uint64_t>(n_);
  w.uint<std::uint64_t>(mean_.size());
  for (double v : mean_) w.f64(v);
  for (double v : sq_mean_) w.f64(v);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("swag posterior: cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(w.data().data()),
            static_cast<std::streamsize>(w.data().size()));
}

SwagPosterior SwagPosterior::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("swag posterior: cannot read " + path.string());
  Reader r(std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {}));
  const std::string magic = r.str(kMagic.size(), "magic");
  if (!std::equal(magic.begin(), magic.end(), kMagic.begin()))
    throw std::runtime_error("swag posterior: bad magic bytes");
  const auto version = r.uint<std::uint32_t>("version");
  if (version != kVersion)
    throw std::runtime_error("swag posterior: unknown version " +
                             std::to_string(version));
  WeightLayout layout;
  const auto nseg = r.uint<std::uint32_t>("segment count");
  for (std::uint32_t s = 0; s < nseg; ++s) {
    const auto len = r.uint<std::uint32_t>("segment name length");
    WeightSegment seg;
    seg.name = r.str(len, "segment name");
    seg.offset = r.uint<std::uint64_t>("segment offset");
    seg.size = r.uint<std::uint64_t>("segment size");
    if (seg.offset != layout.total())
      throw std::runtime_error("swag posterior: non-contiguous layout segment " +
                               seg.name);
    layout.segments.push_back(std::move(seg));
  }
  const auto n = r.uint<std::uint64_t>("snapshot count");
  const auto dim = r.uint<std::uint64_t>("dimension");
  if (dim != layout.total())
    throw std::runtime_error("swag posterior: dimension " + std::to_string(dim) +
                             " does not match layout total " +
                             std::to_string(layout.total()));
  r.need(dim * 16, "moments");
  std::vector<double> mean(dim), sq(dim);
  for (auto& v : mean) v = r.f64("mean");
  for (auto& v : sq) v = r.f64("second moment");
  if (!r.done())
    throw std::runtime_error("swag posterior: trailing bytes at offset " +
                             std::to_string(r.pos()));
  return from_moments(std::move(layout), n, std::move(mean), std::move(sq));
}

}  // namespace reidlab
