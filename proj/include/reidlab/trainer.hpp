#pragma once

// Toy end-to-end training: an MLP embedder on synthetic identities trained
// with a triplet loss plus label-smoothed cross-entropy, an optional cyclic
// phase that feeds a SWAG posterior, and held-out retrieval metrics.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "reidlab/data.hpp"
#include "reidlab/losses.hpp"
#include "reidlab/matrix.hpp"
#include "reidlab/pooling.hpp"
#include "reidlab/swag.hpp"
#include "reidlab/tensor.hpp"

namespace reidlab {

struct ModelConfig {
  std::size_t input_dim = 32;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t embed_dim = 16;
  bool l2_normalize = true;
  // Last layer emits embed_dim × gem_positions activations pooled per channel.
  bool gem_head = false;
  std::size_t gem_positions = 4;
  std::size_t classes = 0;  // 0: no classifier
};

class ToyModel {
 public:
  ToyModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  // B×input_dim -> B×embed_dim.
  Tensor embed(const Tensor& x) const;
  // B×embed_dim -> B×classes (bias-free).
  Tensor logits(const Tensor& embedding) const;
  Matrix embed_rows(const Matrix& x) const;

  std::vector<Tensor>& parameters() { return params_; }
  const std::vector<Tensor>& parameters() const { return params_; }
  GemLayer* gem() { return gem_ ? &*gem_ : nullptr; }

  WeightLayout layout() const;
  WeightVector weights() const;
  void set_weights(const WeightVector& w);

 private:
  ModelConfig config_;
  std::vector<Tensor> params_;  // W0,b0,W1,b1,...,[classifier],[gem p]
  std::size_t dense_layers_ = 0;
  std::optional<Tensor> classifier_;
  std::optional<GemLayer> gem_;
  std::vector<std::string> names_;
};

struct RunConfig {
  std::uint64_t seed = 1;

  // Data
  std::size_t identities = 50;
  std::size_t per_id = 20;
  std::size_t heldout_identities = 50;
  std::size_t dim = 32;
  std::size_t informative_dims = 8;
  double sigma = 0.3;
  double nuisance_sigma = 3.0;
  double spread = 4.0;
  double camera_shift = 0.5;
  std::size_t cameras = 6;

  // Model
  std::size_t hidden = 64;
  std::size_t hidden_layers = 2;
  std::size_t embed_dim = 16;
  bool l2_normalize = true;
  bool gem_head = false;

  // Loss
  TripletVariant loss = TripletVariant::SoftMargin;
  double margin = 0.3;
  double smoothing = 0.1;
  double ce_weight = 1.0;

  // Optimization
  int epochs = 150;
  double lr_peak = 3e-2;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t pk_identities = 8;
  std::size_t pk_instances = 4;
  bool rea = false;
  double rea_probability = 0.5;

  // Cyclic + SWAG phase
  bool swag = false;
  int cycles = 15;
  int cycle_length = 4;
  double cyclic_base_lr = 3e-3;
  double cyclic_decay = 0.7;
  std::size_t bma_samples = 0;
  double bma_scale = 0.5;

  std::string out_dir;  // empty: write nothing
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> config_keys();
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& cfg, const std::string& key);
// Flat `key = value` lines; '#' starts a comment.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});
std::string format_config(const RunConfig& cfg);
std::map<std::string, std::string> config_map(const RunConfig& cfg);

struct HeldOutScore {
  double rank1 = 0.0;
  double map = 0.0;
};

struct EpochRecord {
  int epoch = 0;  // 0 = before training
  std::string phase;
  double lr = 0.0;
  double loss = 0.0;
  double triplet = 0.0;
  double ce = 0.0;
  double rank1 = 0.0;
  double map = 0.0;
};

struct SnapshotRecord {
  int epoch = 0;
  int cycle = 0;
  HeldOutScore score;
  WeightVector weights;  // kept so the posterior can be recomputed offline
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int epoch, double lr)
      : std::runtime_error("loss diverged at epoch " + std::to_string(epoch) +
                           " with lr " + std::to_string(lr)),
        epoch_(epoch),
        lr_(lr) {}
  int epoch() const { return epoch_; }
  double lr() const { return lr_; }

 private:
  int epoch_;
  double lr_;
};

struct TrainResult {
  RunConfig config;
  std::vector<EpochRecord> trace;
  HeldOutScore untrained;
  HeldOutScore warmup_final;  // end of the warmup phase
  std::vector<SnapshotRecord> snapshots;
  std::optional<HeldOutScore> swa;
  std::optional<HeldOutScore> bma;
  HeldOutScore final_score;  // SWA mean when the SWAG phase ran
  std::optional<SwagPosterior> posterior;
  WeightVector final_weights;
  double seconds = 0.0;
};

struct ToyData {
  IdentityDataset train;
  QueryGallery heldout;
};

ToyData make_toy_data(const RunConfig& cfg);
ModelConfig model_config(const RunConfig& cfg, std::size_t classes);
HeldOutScore score_heldout(const ToyModel& model, const QueryGallery& heldout);
HeldOutScore score_embeddings(const Matrix& query, const Matrix& gallery,
                              const QueryGallery& heldout);

// Throws TrainingDiverged on a non-finite loss.
TrainResult train(const RunConfig& cfg);

// Writes config.txt, metrics.csv, summary.json, SVG plots and, with SWAG,
// posterior.swag into cfg.out_dir.
void write_run_artifacts(const TrainResult& result, const std::filesystem::path& dir);
std::string summary_json(const TrainResult& result);

}  // namespace reidlab
