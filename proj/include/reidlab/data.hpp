#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "reidlab/matrix.hpp"

namespace reidlab {

enum class Split { Train, Query, Gallery };
std::string_view to_string(Split s);
std::optional<Split> parse_split(std::string_view s);

struct IdentityDataset {
  Matrix samples;  // N×D
  std::vector<int> ids;
  std::vector<int> cams;
  Split split = Split::Train;

  std::size_t size() const { return ids.size(); }
  std::size_t dim() const { return samples.cols; }
  IdentityDataset subset(std::span<const std::size_t> rows) const;
  bool operator==(const IdentityDataset&) const = default;
};

// Gaussian identity clusters. Centers are uniform in [-spread, spread] on the
// first `informative_dims` coordinates (all when 0) and zero elsewhere;
// samples add sigma noise on informative coordinates and nuisance_sigma noise
// on the rest. Camera ids cycle per identity; each camera adds a fixed
// random offset of norm camera_shift.
struct SyntheticSpec {
  std::size_t identities = 50;
  std::size_t per_id = 20;
  std::size_t dim = 32;
  double sigma = 0.5;
  double spread = 5.0;
  std::size_t cameras = 6;
  std::size_t informative_dims = 0;
  double nuisance_sigma = -1.0;  // < 0: same as sigma
  double camera_shift = 0.0;
  int first_id = 0;
  std::uint64_t seed = 0;
};

IdentityDataset gen_synthetic(const SyntheticSpec& spec);

struct QueryGallery {
  IdentityDataset query;
  IdentityDataset gallery;
};

// Every 4th sample of each identity (25%) becomes a query; the rest form the
// gallery.
QueryGallery split_query_gallery(const IdentityDataset& data,
                                 std::size_t query_stride = 4);

struct PkSpec {
  std::size_t identities = 8;  // P
  std::size_t instances = 4;   // K
  std::size_t batch_size() const { return identities * instances; }
};

// PK batches over an epoch: identities are drawn without replacement until
// exhausted, then reshuffled. Identities with fewer than K samples are
// completed by sampling with replacement.
class PkSampler {
 public:
  PkSampler(std::span<const int> ids, PkSpec spec, std::uint64_t seed);

  std::vector<std::size_t> next_batch();
  // ceil(N / (P·K))
  std::size_t batches_per_epoch() const;
  std::size_t identity_count() const { return by_id_.size(); }

 private:
  int draw_identity(std::span<const int> exclude);

  PkSpec spec_;
  std::size_t n_ = 0;
  std::vector<int> labels_;
  std::vector<std::vector<std::size_t>> by_id_;
  std::vector<int> queue_;
  std::mt19937_64 rng_;
};

std::vector<std::size_t> pk_sample(std::span<const int> ids, PkSpec spec,
                                   std::uint64_t seed);

// ---------------------------------------------------------------------------
// Random erasing

enum class EraseFill { Random, Mean };

struct ReaParams {
  double probability = 0.5;
  double area_lo = 0.02;
  double area_hi = 0.4;
  double aspect_lo = 0.3;
  double aspect_hi = 3.3;
  EraseFill fill = EraseFill::Random;
  std::vector<double> mean;  // per channel, for EraseFill::Mean
  int max_attempts = 100;

  void validate() const;
};

struct Image {
  std::size_t height = 0, width = 0, channels = 0;
  std::vector<double> data;  // H×W×C

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
      : height(h), width(w), channels(c), data(h * w * c, fill) {}
  double& at(std::size_t y, std::size_t x, std::size_t c) {
    return data[(y * width + x) * channels + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return data[(y * width + x) * channels + c];
  }
  bool operator==(const Image&) const = default;
};

struct EraseRect {
  std::size_t top = 0, left = 0, height = 0, width = 0;
  double area_ratio(const Image& img) const {
    return static_cast<double>(height * width) /
           static_cast<double>(img.height * img.width);
  }
  double aspect() const {
    return static_cast<double>(height) / static_cast<double>(width);
  }
};

class RandomErasing {
 public:
  explicit RandomErasing(ReaParams params);

  // Erases one rectangle in place with the configured probability. Returns
  // the rectangle, or nullopt when untouched (including failed placement).
  std::optional<EraseRect> apply(Image& image, std::mt19937_64& rng);

  const ReaParams& params() const { return params_; }
  std::size_t calls() const { return calls_; }
  std::size_t erased() const { return erased_; }
  std::size_t failed_placements() const { return failed_; }

 private:
  ReaParams params_;
  std::size_t calls_ = 0, erased_ = 0, failed_ = 0;
};

Image random_erase(Image image, const ReaParams& params, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Embedding files: a `# reidlab-embeddings v1 rows=N dim=D split=S` line,
// then a CSV header `id,cam,f0..f{D-1}` and one row per sample with
// doubles printed to 17 significant digits.

class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

void save_embeddings(const IdentityDataset& data, const std::filesystem::path& path);
IdentityDataset load_embeddings(const std::filesystem::path& path);

void write_embeddings(const IdentityDataset& data, std::ostream& out);
IdentityDataset read_embeddings(std::istream& in);

}  // namespace reidlab
