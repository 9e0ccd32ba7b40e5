#include "reidlab/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include <json.hpp>

#include "reidlab/evaluate.hpp"
#include "reidlab/plot.hpp"
#include "reidlab/schedule.hpp"

namespace reidlab {

// ---------------------------------------------------------------------------
// Model

ToyModel::ToyModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  if (config_.input_dim == 0 || config_.embed_dim == 0)
    throw std::invalid_argument("ToyModel: dimensions must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  auto gaussian = [&](Shape shape, double stddev) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = stddev * z(rng);
    return Tensor::from(std::move(shape), std::move(v), true);
  };

  std::vector<std::size_t> dims = {config_.input_dim};
  dims.insert(dims.end(), config_.hidden.begin(), config_.hidden.end());
  dims.push_back(config_.embed_dim * (config_.gem_head ? config_.gem_positions : 1));
  dense_layers_ = dims.size() - 1;
  for (std::size_t l = 0; l < dense_layers_; ++l) {
    const double he = std::sqrt(2.0 / static_cast<double>(dims[l]));
    params_.push_back(gaussian({dims[l], dims[l + 1]}, he));
    params_.push_back(Tensor::zeros({1, dims[l + 1]}, true));
    names_.push_back("dense" + std::to_string(l) + ".weight");
    names_.push_back("dense" + std::to_string(l) + ".bias");
  }
  if (config_.classes > 0) {
    params_.push_back(gaussian({config_.embed_dim, config_.classes},
                               1.0 / std::sqrt(static_cast<double>(config_.embed_dim))));
    names_.push_back("classifier.weight");
    classifier_ = params_.back();
  }
  if (config_.gem_head) {
    gem_ = GemLayer::per_channel(config_.embed_dim);
    params_.push_back(gem_->p());
    names_.push_back("gem.p");
  }
}

Tensor ToyModel::embed(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t l = 0; l < dense_layers_; ++l) {
    h = add(matmul(h, params_[2 * l]), params_[2 * l + 1]);
    if (l + 1 < dense_layers_ || config_.gem_head) h = relu(h);
  }
  if (config_.gem_head) {
    const std::size_t b = h.dim(0);
    h = gem_pool(reshape(h, {b, config_.embed_dim, config_.gem_positions}), *gem_);
  }
  return config_.l2_normalize ? l2_normalize(h, 1) : h;
}

Tensor ToyModel::logits(const Tensor& embedding) const {
  if (!classifier_) throw std::logic_error("ToyModel: no classifier head configured");
  return matmul(embedding, *classifier_);
}

Matrix ToyModel::embed_rows(const Matrix& x) const {
  const Tensor out = embed(Tensor::from({x.rows, x.cols}, x.data));
  return Matrix(out.dim(0), out.dim(1),
                std::vector<double>(out.values().begin(), out.values().end()));
}

WeightLayout ToyModel::layout() const {
  WeightLayout layout;
  for (std::size_t i = 0; i < params_.size(); ++i) layout.append(names_[i], params_[i].numel());
  return layout;
}

WeightVector ToyModel::weights() const {
  WeightVector w{layout(), {}};
  w.values.reserve(w.layout.total());
  for (const auto& p : params_) w.values.insert(w.values.end(), p.values().begin(), p.values().end());
  return w;
}

void ToyModel::set_weights(const WeightVector& w) {
  if (!(w.layout == layout()))
    throw std::invalid_argument("ToyModel: weight layout does not match the model");
  std::size_t offset = 0;
  for (auto& p : params_) {
    auto dst = p.mutable_values();
    std::copy_n(w.values.begin() + static_cast<std::ptrdiff_t>(offset), dst.size(), dst.begin());
    offset += dst.size();
  }
}

// ---------------------------------------------------------------------------
// Config

namespace {

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& want) {
  throw ConfigError("config: " + key + " = '" + value + "' is not " + want);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size() && std::isfinite(d)) return d;
  } catch (const std::exception&) {
  }
  bad_value(key, v, "a finite number");
}

long long to_integer(const std::string& key, const std::string& v, long long lo) {
  try {
    std::size_t used = 0;
    const long long n = std::stoll(v, &used);
    if (used == v.size() && n >= lo) return n;
  } catch (const std::exception&) {
  }
  bad_value(key, v, "an integer >= " + std::to_string(lo));
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
Field size_field(T RunConfig::*m, long long lo = 0) {
  return {[m](const RunConfig& c) { return std::to_string(c.*m); },
          [m, lo](RunConfig& c, const std::string& v) {
            c.*m = static_cast<T>(to_integer("", v, lo));
          }};
}

Field double_field(double RunConfig::*m) {
  return {[m](const RunConfig& c) { return fmt_double(c.*m); },
          [m](RunConfig& c, const std::string& v) { c.*m = to_double("", v); }};
}

Field bool_field(bool RunConfig::*m) {
  return {[m](const RunConfig& c) { return std::string(c.*m ? "true" : "false"); },
          [m](RunConfig& c, const std::string& v) { c.*m = to_bool("", v); }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"seed", size_field(&RunConfig::seed)},
      {"identities", size_field(&RunConfig::identities, 2)},
      {"per_id", size_field(&RunConfig::per_id, 2)},
      {"heldout_identities", size_field(&RunConfig::heldout_identities, 2)},
      {"dim", size_field(&RunConfig::dim, 1)},
      {"informative_dims", size_field(&RunConfig::informative_dims)},
      {"sigma", double_field(&RunConfig::sigma)},
      {"nuisance_sigma", double_field(&RunConfig::nuisance_sigma)},
      {"spread", double_field(&RunConfig::spread)},
      {"camera_shift", double_field(&RunConfig::camera_shift)},
      {"cameras", size_field(&RunConfig::cameras, 1)},
      {"hidden", size_field(&RunConfig::hidden, 1)},
      {"hidden_layers", size_field(&RunConfig::hidden_layers)},
      {"embed_dim", size_field(&RunConfig::embed_dim, 1)},
      {"l2_normalize", bool_field(&RunConfig::l2_normalize)},
      {"gem_head", bool_field(&RunConfig::gem_head)},
      {"loss",
       {[](const RunConfig& c) { return std::string(to_string(c.loss)); },
        [](RunConfig& c, const std::string& v) {
          auto parsed = parse_triplet_variant(v);
          if (!parsed) bad_value("loss", v, "one of naive, batch-hard, batch-soft, soft-margin");
          c.loss = *parsed;
        }}},
      {"margin", double_field(&RunConfig::margin)},
      {"smoothing", double_field(&RunConfig::smoothing)},
      {"ce_weight", double_field(&RunConfig::ce_weight)},
      {"epochs", size_field(&RunConfig::epochs, 1)},
      {"lr_peak", double_field(&RunConfig::lr_peak)},
      {"momentum", double_field(&RunConfig::momentum)},
      {"weight_decay", double_field(&RunConfig::weight_decay)},
      {"pk_identities", size_field(&RunConfig::pk_identities, 2)},
      {"pk_instances", size_field(&RunConfig::pk_instances, 2)},
      {"rea", bool_field(&RunConfig::rea)},
      {"rea_probability", double_field(&RunConfig::rea_probability)},
      {"swag", bool_field(&RunConfig::swag)},
      {"cycles", size_field(&RunConfig::cycles, 1)},
      {"cycle_length", size_field(&RunConfig::cycle_length, 1)},
      {"cyclic_base_lr", double_field(&RunConfig::cyclic_base_lr)},
      {"cyclic_decay", double_field(&RunConfig::cyclic_decay)},
      {"bma_samples", size_field(&RunConfig::bma_samples)},
      {"bma_scale", double_field(&RunConfig::bma_scale)},
      {"out_dir",
       {[](const RunConfig& c) { return c.out_dir; },
        [](RunConfig& c, const std::string& v) { c.out_dir = v; }}},
  };
  return table;
}

const Field& field(const std::string& key) {
  for (const auto& [k, f] : fields())
    if (k == key) return f;
  throw ConfigError("config: unknown key '" + key + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, f] : fields()) keys.push_back(k);
  return keys;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const Field& f = field(key);
  try {
    f.set(cfg, value);
  } catch (const ConfigError&) {
    throw ConfigError("config: " + key + " = '" + value + "' is invalid");
  }
}

std::string get_config_value(const RunConfig& cfg, const std::string& key) {
  return field(key).get(cfg);
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    try {
      set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string format_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, f] : fields()) out += k + " = " + f.get(cfg) + "\n";
  return out;
}

std::map<std::string, std::string> config_map(const RunConfig& cfg) {
  std::map<std::string, std::string> m;
  for (const auto& [k, f] : fields()) m[k] = f.get(cfg);
  return m;
}

// ---------------------------------------------------------------------------
// Training

ToyData make_toy_data(const RunConfig& cfg) {
  SyntheticSpec spec;
  spec.identities = cfg.identities;
  spec.per_id = cfg.per_id;
  spec.dim = cfg.dim;
  spec.sigma = cfg.sigma;
  spec.spread = cfg.spread;
  spec.cameras = cfg.cameras;
  spec.informative_dims = cfg.informative_dims;
  spec.nuisance_sigma = cfg.nuisance_sigma;
  spec.camera_shift = cfg.camera_shift;
  spec.seed = cfg.seed;
  ToyData data;
  data.train = gen_synthetic(spec);

  // Unseen identities for evaluation.
  spec.identities = cfg.heldout_identities;
  spec.first_id = 100000;
  spec.seed = derive_seed(cfg.seed, 0x4e1d);
  data.heldout = split_query_gallery(gen_synthetic(spec));
  return data;
}

ModelConfig model_config(const RunConfig& cfg, std::size_t classes) {
  ModelConfig m;
  m.input_dim = cfg.dim;
  m.hidden.assign(cfg.hidden_layers, cfg.hidden);
  m.embed_dim = cfg.embed_dim;
  m.l2_normalize = cfg.l2_normalize;
  m.gem_head = cfg.gem_head;
  m.classes = classes;
  return m;
}

HeldOutScore score_embeddings(const Matrix& query, const Matrix& gallery,
                              const QueryGallery& heldout) {
  const Matrix dist = distance_matrix(query, gallery, Metric::Euclidean);
  const EvalResult r = evaluate_reid(dist, heldout.query.ids, heldout.gallery.ids,
                                     heldout.query.cams, heldout.gallery.cams, 20);
  return {r.rank1(), r.map};
}

HeldOutScore score_heldout(const ToyModel& model, const QueryGallery& heldout) {
  return score_embeddings(model.embed_rows(heldout.query.samples),
                          model.embed_rows(heldout.gallery.samples), heldout);
}

namespace {

struct StepLoss {
  double total = 0.0, triplet = 0.0, ce = 0.0;
};

class Trainer {
 public:
  Trainer(const RunConfig& cfg, const ToyData& data)
      : cfg_(cfg),
        data_(data),
        model_(model_config(cfg, cfg.identities), derive_seed(cfg.seed, 1)),
        sampler_(data.train.ids, {cfg.pk_identities, cfg.pk_instances}, derive_seed(cfg.seed, 2)),
        rea_rng_(derive_seed(cfg.seed, 3)),
        rea_(rea_params(cfg)) {
    for (const auto& p : model_.parameters()) velocity_.emplace_back(p.numel(), 0.0);
    // Training ids are first_id + 0..identities-1 and double as class indices.
    triplet_.variant = cfg.loss;
    triplet_.margin = cfg.margin;
    smoothing_ = {cfg.smoothing, cfg.identities};
  }

  ToyModel& model() { return model_; }

  // One pass of ceil(N / PK) batches; no update when lr is empty.
  StepLoss epoch(std::optional<double> lr, PkSampler& sampler) {
    StepLoss acc;
    const std::size_t batches = sampler.batches_per_epoch();
    for (std::size_t b = 0; b < batches; ++b) {
      const StepLoss s = step(sampler.next_batch(), lr);
      acc.total += s.total;
      acc.triplet += s.triplet;
      acc.ce += s.ce;
    }
    const double n = static_cast<double>(batches);
    return {acc.total / n, acc.triplet / n, acc.ce / n};
  }

  StepLoss epoch(std::optional<double> lr) { return epoch(lr, sampler_); }

 private:
  static ReaParams rea_params(const RunConfig& cfg) {
    ReaParams p;
    p.probability = cfg.rea_probability;
    p.fill = EraseFill::Mean;
    p.mean = {0.0};
    return p;
  }

  StepLoss step(const std::vector<std::size_t>& rows, std::optional<double> lr) {
    const std::size_t d = data_.train.dim();
    std::vector<double> x;
    x.reserve(rows.size() * d);
    std::vector<int> ids;
    for (std::size_t r : rows) {
      const auto src = data_.train.samples.row(r);
      if (cfg_.rea && lr) {
        // Erase a block of the feature vector viewed as a 4×(d/4) image.
        Image img(4, d / 4, 1);
        std::copy_n(src.begin(), img.data.size(), img.data.begin());
        rea_.apply(img, rea_rng_);
        x.insert(x.end(), img.data.begin(), img.data.end());
        x.insert(x.end(), src.begin() + static_cast<std::ptrdiff_t>(img.data.size()), src.end());
      } else {
        x.insert(x.end(), src.begin(), src.end());
      }
      ids.push_back(data_.train.ids[r]);
    }
    const Tensor input = Tensor::from({rows.size(), d}, std::move(x));
    const Tensor emb = model_.embed(input);
    for (double v : emb.values())
      if (!std::isfinite(v)) throw TrainingDiverged(current_epoch, lr ? *lr : 0.0);
    EmbeddingBatch batch{emb, ids, {}};
    const Tensor trip = triplet_loss(pairwise_distances(batch, triplet_.distance), ids, triplet_);
    const Tensor ce = cross_entropy_smoothed(model_.logits(emb), ids, smoothing_);
    const Tensor loss = add(trip, mul_scalar(ce, cfg_.ce_weight));
    StepLoss out{loss.item(), trip.item(), ce.item()};
    if (!lr) return out;
    if (!std::isfinite(out.total)) throw TrainingDiverged(current_epoch, *lr);

    auto& params = model_.parameters();
    for (auto& p : params) p.zero_grad();
    backward(loss);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto w = params[i].mutable_values();
      const auto g = params[i].grad();
      auto& v = velocity_[i];
      for (std::size_t k = 0; k < w.size(); ++k) {
        v[k] = cfg_.momentum * v[k] + g[k] + cfg_.weight_decay * w[k];
        w[k] -= *lr * v[k];
        // An overflowing step would otherwise surface later as a NaN distance.
        if (!std::isfinite(w[k])) throw TrainingDiverged(current_epoch, *lr);
      }
    }
    if (auto* gem = model_.gem()) gem->project();
    return out;
  }

 public:
  int current_epoch = 0;

 private:
  const RunConfig& cfg_;
  const ToyData& data_;
  ToyModel model_;
  PkSampler sampler_;
  std::mt19937_64 rea_rng_;
  RandomErasing rea_;
  std::vector<std::vector<double>> velocity_;
  TripletConfig triplet_;
  SmoothingConfig smoothing_;
};

void validate(const RunConfig& cfg) {
  auto bad = [](const std::string& m) { throw ConfigError("config: " + m); };
  if (cfg.informative_dims > cfg.dim) bad("informative_dims exceeds dim");
  if (cfg.pk_identities > cfg.identities) bad("pk_identities exceeds identities");
  if (cfg.rea && (cfg.dim < 8 || cfg.dim % 4 != 0)) bad("rea needs dim >= 8 and divisible by 4");
  if (!(cfg.lr_peak > 0.0)) bad("lr_peak must be positive");
  if (!(cfg.sigma > 0.0) || !(cfg.spread > 0.0)) bad("sigma and spread must be positive");
  if (cfg.smoothing < 0.0 || cfg.smoothing >= 1.0) bad("smoothing must be in [0, 1)");
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) bad("momentum must be in [0, 1)");
  if (cfg.weight_decay < 0.0) bad("weight_decay must be >= 0");
  if (cfg.rea_probability < 0.0 || cfg.rea_probability > 1.0) bad("rea_probability must be in [0, 1]");
  if (cfg.cyclic_decay <= 0.0 || cfg.cyclic_base_lr <= 0.0) bad("cyclic schedule must be positive");
}

}  // namespace

TrainResult train(const RunConfig& cfg) {
  validate(cfg);
  const auto start = std::chrono::steady_clock::now();
  const ToyData data = make_toy_data(cfg);
  Trainer trainer(cfg, data);
  ToyModel& model = trainer.model();

  TrainResult res;
  res.config = cfg;
  auto record = [&](int epoch, const std::string& phase, double lr, const StepLoss& loss) {
    const HeldOutScore s = score_heldout(model, data.heldout);
    res.trace.push_back({epoch, phase, lr, loss.total, loss.triplet, loss.ce, s.rank1, s.map});
    return s;
  };

  {
    // Untrained control on its own sampler so the training stream is unchanged.
    PkSampler probe(data.train.ids, {cfg.pk_identities, cfg.pk_instances},
                    derive_seed(cfg.seed, 4));
    res.untrained = record(0, "init", 0.0, trainer.epoch(std::nullopt, probe));
  }

  WarmupSchedule warmup = WarmupSchedule::rescaled(cfg.epochs);
  warmup.peak = cfg.lr_peak;
  for (int e = 1; e <= cfg.epochs; ++e) {
    trainer.current_epoch = e;
    const double lr = warmup.lr(e);
    const StepLoss loss = trainer.epoch(lr);
    res.warmup_final = record(e, "warmup", lr, loss);
  }
  res.final_score = res.warmup_final;

  if (cfg.swag) {
    CyclicSchedule cyc;
    cyc.base_lr = cfg.cyclic_base_lr;
    cyc.cycle_length = cfg.cycle_length;
    cyc.cycles = cfg.cycles;
    cyc.decay = cfg.cyclic_decay;
    SwagPosterior posterior(model.layout());
    for (int e = 0; e < cyc.total_epochs(); ++e) {
      const int global = cfg.epochs + e + 1;
      trainer.current_epoch = global;
      const double lr = cyclic_lr(e, cyc);
      const StepLoss loss = trainer.epoch(lr);
      const HeldOutScore s = record(global, "cyclic", lr, loss);
      if (is_snapshot_epoch(e, cyc)) {
        WeightVector w = model.weights();
        posterior.collect(w);
        res.snapshots.push_back({global, e / cyc.cycle_length, s, std::move(w)});
      }
    }
    model.set_weights(swa_weights(posterior));
    res.swa = score_heldout(model, data.heldout);
    res.final_score = *res.swa;

    if (cfg.bma_samples > 0) {
      Matrix q(data.heldout.query.size(), cfg.embed_dim);
      Matrix g(data.heldout.gallery.size(), cfg.embed_dim);
      for (std::size_t i = 0; i < cfg.bma_samples; ++i) {
        model.set_weights(swag_sample(posterior, cfg.bma_scale, derive_seed(cfg.seed, 100 + i)));
        const Matrix qi = model.embed_rows(data.heldout.query.samples);
        const Matrix gi = model.embed_rows(data.heldout.gallery.samples);
        for (std::size_t k = 0; k < q.data.size(); ++k) q.data[k] += qi.data[k];
        for (std::size_t k = 0; k < g.data.size(); ++k) g.data[k] += gi.data[k];
      }
      if (cfg.l2_normalize)
        for (Matrix* m : {&q, &g})
          for (std::size_t r = 0; r < m->rows; ++r) {
            double ss = 0.0;
            for (double v : m->row(r)) ss += v * v;
            if (ss > 0.0)
              for (double& v : m->row(r)) v /= std::sqrt(ss);
          }
      res.bma = score_embeddings(q, g, data.heldout);
      model.set_weights(swa_weights(posterior));
    }
    res.posterior = std::move(posterior);
  }
  res.final_weights = model.weights();
  res.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!cfg.out_dir.empty()) write_run_artifacts(res, cfg.out_dir);
  return res;
}

// ---------------------------------------------------------------------------
// Artifacts

namespace {

nlohmann::json score_json(const HeldOutScore& s) { return {{"rank1", s.rank1}, {"map", s.map}}; }

}  // namespace

std::string summary_json(const TrainResult& r) {
  nlohmann::json j;
  j["config"] = config_map(r.config);
  j["untrained"] = score_json(r.untrained);
  j["warmup_final"] = score_json(r.warmup_final);
  j["final"] = score_json(r.final_score);
  j["epochs_run"] = r.trace.empty() ? 0 : r.trace.back().epoch;
  j["seconds"] = r.seconds;
  if (!r.trace.empty()) j["final_loss"] = r.trace.back().loss;
  nlohmann::json snaps = nlohmann::json::array();
  double best = 0.0;
  for (const auto& s : r.snapshots) {
    snaps.push_back({{"epoch", s.epoch}, {"cycle", s.cycle}, {"rank1", s.score.rank1},
                     {"map", s.score.map}});
    best = std::max(best, s.score.map);
  }
  if (r.swa) {
    j["snapshots"] = snaps;
    j["best_snapshot_map"] = best;
    j["swa"] = score_json(*r.swa);
    if (r.bma) j["bma"] = score_json(*r.bma);
  }
  return j.dump(2);
}

void write_run_artifacts(const TrainResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream out(dir / name);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    out << text;
  };
  write("config.txt", format_config(r.config));
  write("summary.json", summary_json(r) + "\n");

  std::ostringstream csv;
  csv << "epoch,phase,lr,loss,triplet,ce,rank1,map\n";
  char buf[256];
  for (const auto& e : r.trace) {
    std::snprintf(buf, sizeof buf, "%d,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", e.epoch,
                  e.phase.c_str(), e.lr, e.loss, e.triplet, e.ce, e.rank1, e.map);
    csv << buf;
  }
  write("metrics.csv", csv.str());

  std::vector<double> x, loss, lr, map, rank1;
  for (const auto& e : r.trace) {
    x.push_back(e.epoch);
    loss.push_back(e.loss);
    lr.push_back(e.epoch == 0 ? std::nan("") : e.lr);
    map.push_back(e.map);
    rank1.push_back(e.rank1);
  }
  write("loss.svg", line_chart_svg("Training loss", "epoch", x, {{"loss", loss}}));
  write("lr.svg", line_chart_svg("Learning rate", "epoch", x, {{"lr", lr}}, true));
  write("map.svg", line_chart_svg("Held-out retrieval", "epoch", x,
                                  {{"mAP", map}, {"rank-1", rank1}}));
  if (r.posterior) r.posterior->save(dir / "posterior.swag");
}

}  // namespace reidlab
