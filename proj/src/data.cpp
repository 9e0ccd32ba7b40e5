#include "reidlab/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace reidlab {

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Query: return "query";
    case Split::Gallery: return "gallery";
  }
  return "?";
}

std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "query") return Split::Query;
  if (s == "gallery") return Split::Gallery;
  return std::nullopt;
}

IdentityDataset IdentityDataset::subset(std::span<const std::size_t> rows) const {
  IdentityDataset out;
  out.split = split;
  out.samples = Matrix(rows.size(), dim());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = samples.row(rows[i]);
    std::copy(src.begin(), src.end(), out.samples.row(i).begin());
    out.ids.push_back(ids[rows[i]]);
    out.cams.push_back(cams[rows[i]]);
  }
  return out;
}

IdentityDataset gen_synthetic(const SyntheticSpec& spec) {
  // sigma = 0 is allowed: every sample of an identity then sits on its center.
  if (!(spec.sigma >= 0.0)) throw std::invalid_argument("gen_synthetic: sigma must be >= 0");
  if (!(spec.spread > 0.0)) throw std::invalid_argument("gen_synthetic: spread must be > 0");
  if (spec.dim == 0 || spec.identities == 0 || spec.per_id == 0 || spec.cameras == 0)
    throw std::invalid_argument("gen_synthetic: sizes must be positive");
  const std::size_t informative =
      spec.informative_dims == 0 ? spec.dim : std::min(spec.informative_dims, spec.dim);
  const double nuisance = spec.nuisance_sigma < 0.0 ? spec.sigma : spec.nuisance_sigma;

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> uniform(-spec.spread, spec.spread);
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix centers(spec.identities, spec.dim);
  for (std::size_t p = 0; p < spec.identities; ++p)
    for (std::size_t d = 0; d < informative; ++d) centers(p, d) = uniform(rng);

  Matrix cam_offset(spec.cameras, spec.dim);
  if (spec.camera_shift > 0.0) {
    for (std::size_t c = 0; c < spec.cameras; ++c) {
      double ss = 0.0;
      for (std::size_t d = 0; d < spec.dim; ++d) {
        cam_offset(c, d) = normal(rng);
        ss += cam_offset(c, d) * cam_offset(c, d);
      }
      const double scale = spec.camera_shift / std::sqrt(ss);
      for (std::size_t d = 0; d < spec.dim; ++d) cam_offset(c, d) *= scale;
    }
  }

  IdentityDataset out;
  out.samples = Matrix(spec.identities * spec.per_id, spec.dim);
  std::size_t row = 0;
  for (std::size_t p = 0; p < spec.identities; ++p)
    for (std::size_t k = 0; k < spec.per_id; ++k, ++row) {
      const std::size_t cam = k % spec.cameras;
      for (std::size_t d = 0; d < spec.dim; ++d) {
        const double s = d < informative ? spec.sigma : nuisance;
        out.samples(row, d) = centers(p, d) + s * normal(rng) + cam_offset(cam, d);
      }
      out.ids.push_back(spec.first_id + static_cast<int>(p));
      out.cams.push_back(static_cast<int>(cam));
    }
  return out;
}

QueryGallery split_query_gallery(const IdentityDataset& data,
                                 std::size_t query_stride) {
  if (query_stride < 2)
    throw std::invalid_argument("split_query_gallery: stride must be >= 2");
  std::map<int, std::size_t> seen;
  std::vector<std::size_t> q, g;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t k = seen[data.ids[i]]++;
    (k % query_stride == 0 ? q : g).push_back(i);
  }
  QueryGallery out{data.subset(q), data.subset(g)};
  out.query.split = Split::Query;
  out.gallery.split = Split::Gallery;
  return out;
}

// ---------------------------------------------------------------------------
// PK sampling

PkSampler::PkSampler(std::span<const int> ids, PkSpec spec, std::uint64_t seed)
    : spec_(spec), n_(ids.size()), rng_(seed) {
  if (spec.identities == 0 || spec.instances == 0)
    throw std::invalid_argument("pk_sample: P and K must be positive");
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < ids.size(); ++i) groups[ids[i]].push_back(i);
  if (groups.size() < spec.identities)
    throw std::invalid_argument("pk_sample: " + std::to_string(groups.size()) +
                                " identities available, P = " +
                                std::to_string(spec.identities));
  for (auto& [label, rows] : groups) {
    labels_.push_back(label);
    by_id_.push_back(std::move(rows));
  }
}

std::size_t PkSampler::batches_per_epoch() const {
  const std::size_t b = spec_.batch_size();
  return (n_ + b - 1) / b;
}

int PkSampler::draw_identity(std::span<const int> exclude) {
  auto excluded = [&](int v) {
    return std::find(exclude.begin(), exclude.end(), v) != exclude.end();
  };
  for (;;) {
    if (queue_.empty()) {
      queue_.resize(by_id_.size());
      std::iota(queue_.begin(), queue_.end(), 0);
      std::shuffle(queue_.begin(), queue_.end(), rng_);
    }
    // Take the first queued identity not already in this batch.
    auto it = std::find_if(queue_.rbegin(), queue_.rend(),
                           [&](int v) { return !excluded(v); });
    if (it == queue_.rend()) {
      // Everything left is already in the batch; start a fresh pass.
      queue_.clear();
      continue;
    }
    const int chosen = *it;
    queue_.erase(std::next(it).base());
    return chosen;
  }
}

std::vector<std::size_t> PkSampler::next_batch() {
  std::vector<int> chosen;
  std::vector<std::size_t> batch;
  batch.reserve(spec_.batch_size());
  for (std::size_t p = 0; p < spec_.identities; ++p) {
    const int g = draw_identity(chosen);
    chosen.push_back(g);
    std::vector<std::size_t> rows = by_id_[static_cast<std::size_t>(g)];
    std::shuffle(rows.begin(), rows.end(), rng_);
    if (rows.size() >= spec_.instances) {
      batch.insert(batch.end(), rows.begin(),
                   rows.begin() + static_cast<std::ptrdiff_t>(spec_.instances));
    } else {
      batch.insert(batch.end(), rows.begin(), rows.end());
      std::uniform_int_distribution<std::size_t> pick(0, rows.size() - 1);
      for (std::size_t k = rows.size(); k < spec_.instances; ++k)
        batch.push_back(rows[pick(rng_)]);
    }
  }
  return batch;
}

std::vector<std::size_t> pk_sample(std::span<const int> ids, PkSpec spec,
                                   std::uint64_t seed) {
  PkSampler sampler(ids, spec, seed);
  return sampler.next_batch();
}

// ---------------------------------------------------------------------------
// Random erasing

void ReaParams::validate() const {
  if (!(probability >= 0.0 && probability <= 1.0))
    throw std::invalid_argument("rea: probability must be in [0, 1]");
  if (!(area_lo > 0.0 && area_lo < area_hi && area_hi < 1.0))
    throw std::invalid_argument("rea: need 0 < area_lo < area_hi < 1");
  if (!(aspect_lo > 0.0 && aspect_lo < aspect_hi))
    throw std::invalid_argument("rea: need 0 < aspect_lo < aspect_hi");
  if (max_attempts < 1) throw std::invalid_argument("rea: max_attempts must be >= 1");
}

RandomErasing::RandomErasing(ReaParams params) : params_(std::move(params)) {
  params_.validate();
}

std::optional<EraseRect> RandomErasing::apply(Image& image, std::mt19937_64& rng) {
  if (image.height < 2 || image.width < 2)
    throw std::invalid_argument("random_erase: image must be at least 2x2");
  if (params_.fill == EraseFill::Mean && params_.mean.size() != image.channels)
    throw std::invalid_argument("random_erase: mean fill needs one value per channel");
  ++calls_;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (unit(rng) >= params_.probability) return std::nullopt;

  const double area = static_cast<double>(image.height * image.width);
  std::uniform_real_distribution<double> area_dist(params_.area_lo, params_.area_hi);
  std::uniform_real_distribution<double> aspect_dist(params_.aspect_lo,
                                                     params_.aspect_hi);
  for (int attempt = 0; attempt < params_.max_attempts; ++attempt) {
    const double target = area_dist(rng) * area;
    const double r = aspect_dist(rng);
    const auto h = static_cast<std::size_t>(std::lround(std::sqrt(target * r)));
    const auto w = static_cast<std::size_t>(std::lround(std::sqrt(target / r)));
    if (h == 0 || w == 0 || h >= image.height || w >= image.width) continue;
    EraseRect rect{0, 0, h, w};
    // Rounding can push the realized rectangle outside the ranges.
    const double ratio = rect.area_ratio(image), aspect = rect.aspect();
    if (!(ratio > params_.area_lo && ratio < params_.area_hi)) continue;
    if (!(aspect > params_.aspect_lo && aspect < params_.aspect_hi)) continue;
    std::uniform_int_distribution<std::size_t> top(0, image.height - h);
    std::uniform_int_distribution<std::size_t> left(0, image.width - w);
    rect.top = top(rng);
    rect.left = left(rng);
    for (std::size_t y = rect.top; y < rect.top + h; ++y)
      for (std::size_t x = rect.left; x < rect.left + w; ++x)
        for (std::size_t c = 0; c < image.channels; ++c)
          image.at(y, x, c) =
              params_.fill == EraseFill::Mean ? params_.mean[c] : unit(rng);
    ++erased_;
    return rect;
  }
  ++failed_;
  return std::nullopt;
}

Image random_erase(Image image, const ReaParams& params, std::uint64_t seed) {
  RandomErasing rea(params);
  std::mt19937_64 rng(seed);
  rea.apply(image, rng);
  return image;
}

// ---------------------------------------------------------------------------
// Embedding files

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class T>
T parse_number(std::string_view s, std::size_t line, const char* what) {
  T v{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw FormatError(std::string("cannot parse ") + what + " '" +
                          std::string(s) + "'",
                      line);
  return v;
}

std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

}  // namespace

void write_embeddings(const IdentityDataset& data, std::ostream& out) {
  out << "# reidlab-embeddings v1 rows=" << data.size() << " dim=" << data.dim()
      << " split=" << to_string(data.split) << '\n';
  out << "id,cam";
  for (std::size_t d = 0; d < data.dim(); ++d) out << ",f" << d;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.ids[i] << ',' << data.cams[i];
    for (double v : data.samples.row(i)) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
}

IdentityDataset read_embeddings(std::istream& in) {
  std::string text;
  std::size_t line_no = 1;
  if (!std::getline(in, text)) throw FormatError("empty file", line_no);
  std::string_view meta = trim_cr(text);
  constexpr std::string_view kPrefix = "# reidlab-embeddings ";
  if (meta.substr(0, kPrefix.size()) != kPrefix)
    throw FormatError("missing '# reidlab-embeddings' header", line_no);
  std::istringstream fields{std::string(meta.substr(kPrefix.size()))};
  std::string version, token;
  fields >> version;
  if (version != "v1") throw FormatError("unknown version '" + version + "'", line_no);
  std::optional<std::size_t> rows, dim;
  Split split = Split::Train;
  while (fields >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw FormatError("malformed header field '" + token + "'", line_no);
    const std::string key = token.substr(0, eq), value = token.substr(eq + 1);
    if (key == "rows") rows = parse_number<std::size_t>(value, line_no, "rows");
    else if (key == "dim") dim = parse_number<std::size_t>(value, line_no, "dim");
    else if (key == "split") {
      auto s = parse_split(value);
      if (!s) throw FormatError("unknown split '" + value + "'", line_no);
      split = *s;
    }
  }
  if (!rows || !dim) throw FormatError("header lacks rows= or dim=", line_no);

  ++line_no;
  if (!std::getline(in, text)) throw FormatError("missing column header", line_no);
  const auto cols = split_csv(trim_cr(text));
  if (cols.size() < 2 || cols[0] != "id" || cols[1] != "cam")
    throw FormatError("schema error: columns must start with id,cam", line_no);
  if (cols.size() != *dim + 2)
    throw FormatError("schema error: expected " + std::to_string(*dim) +
                          " feature columns, found " + std::to_string(cols.size() - 2),
                      line_no);
  for (std::size_t d = 0; d < *dim; ++d)
    if (cols[d + 2] != "f" + std::to_string(d))
      throw FormatError("schema error: column " + std::to_string(d + 2) +
                            " should be f" + std::to_string(d),
                        line_no);

  IdentityDataset out;
  out.split = split;
  out.samples = Matrix(*rows, *dim);
  std::size_t r = 0;
  while (std::getline(in, text)) {
    ++line_no;
    const auto line = trim_cr(text);
    if (line.empty()) continue;
    if (r >= *rows)
      throw FormatError("more rows than the declared " + std::to_string(*rows), line_no);
    const auto cells = split_csv(line);
    if (cells.size() != *dim + 2)
      throw FormatError("row has " + std::to_string(cells.size()) +
                            " fields, expected " + std::to_string(*dim + 2),
                        line_no);
    out.ids.push_back(parse_number<int>(cells[0], line_no, "id"));
    out.cams.push_back(parse_number<int>(cells[1], line_no, "cam"));
    for (std::size_t d = 0; d < *dim; ++d)
      out.samples(r, d) = parse_number<double>(cells[d + 2], line_no, "feature");
    ++r;
  }
  if (r != *rows)
    throw FormatError("truncated: expected " + std::to_string(*rows) +
                          " rows, found " + std::to_string(r),
                      line_no);
  return out;
}

void save_embeddings(const IdentityDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_embeddings(data, out);
}

IdentityDataset load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return read_embeddings(in);
}

}  // namespace reidlab
