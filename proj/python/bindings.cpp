#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "reidlab/archshape.hpp"
#include "reidlab/cli.hpp"
#include "reidlab/data.hpp"
#include "reidlab/evaluate.hpp"
#include "reidlab/gradsuite.hpp"
#include "reidlab/losses.hpp"
#include "reidlab/pooling.hpp"
#include "reidlab/schedule.hpp"
#include "reidlab/tracksim.hpp"
#include "reidlab/trainer.hpp"

namespace py = pybind11;
using namespace reidlab;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
  const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
  return Matrix(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

Array from_matrix(const Matrix& m) {
  Array out({m.rows, m.cols});
  std::copy(m.data.begin(), m.data.end(), out.mutable_data());
  return out;
}

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor::from(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

TripletVariant variant_of(const std::string& name) {
  auto v = parse_triplet_variant(name);
  if (!v) throw std::invalid_argument("unknown triplet variant '" + name + "'");
  return *v;
}

py::dict score(const HeldOutScore& s) {
  py::dict d;
  d["rank1"] = s.rank1;
  d["map"] = s.map;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Compact person re-identification toolkit";

  m.def("warmup_lr", &warmup_lr, py::arg("epoch"));
  m.def(
      "cyclic_lr",
      [](int epoch, double base_lr, int cycle_length, int cycles, double decay) {
        return cyclic_lr(epoch, {base_lr, cycle_length, cycles, decay, 0.0});
      },
      py::arg("epoch"), py::arg("base_lr") = 3e-4, py::arg("cycle_length") = 35,
      py::arg("cycles") = 15, py::arg("decay") = 0.7);
  m.def(
      "is_snapshot_epoch",
      [](int epoch, int cycle_length) {
        CyclicSchedule s;
        s.cycle_length = cycle_length;
        return is_snapshot_epoch(epoch, s);
      },
      py::arg("epoch"), py::arg("cycle_length") = 35);

  m.def(
      "pairwise_distances",
      [](const Array& emb, bool squared) {
        const Tensor d = pairwise_distance(to_tensor(emb), squared);
        const std::size_t n = d.dim(0);
        return from_matrix(Matrix(n, n, std::vector<double>(d.values().begin(), d.values().end())));
      },
      py::arg("embeddings"), py::arg("squared") = false);
  m.def(
      "triplet_loss",
      [](const Array& emb, const std::vector<int>& ids, const std::string& variant,
         double margin) {
        TripletConfig cfg{variant_of(variant), margin, Distance::Euclidean};
        EmbeddingBatch b{to_tensor(emb), ids, {}};
        return triplet_loss(pairwise_distances(b), ids, cfg).item();
      },
      py::arg("embeddings"), py::arg("ids"), py::arg("variant") = "soft-margin",
      py::arg("margin") = 0.3);
  m.def(
      "cross_entropy_smoothed",
      [](const Array& logits, const std::vector<int>& targets, double epsilon) {
        if (logits.ndim() != 2) throw std::invalid_argument("expected B x C logits");
        SmoothingConfig cfg{epsilon, static_cast<std::size_t>(logits.shape(1))};
        return cross_entropy_smoothed(to_tensor(logits), targets, cfg).item();
      },
      py::arg("logits"), py::arg("targets"), py::arg("epsilon") = 0.1);
  m.def(
      "gem_pool",
      [](const Array& features, double p) {
        auto layer = GemLayer::shared(p);
        const Tensor out = gem_pool(to_tensor(features), layer);
        return std::vector<double>(out.values().begin(), out.values().end());
      },
      py::arg("features"), py::arg("p") = 3.0, "C x N features -> C pooled values");

  m.def(
      "distance_matrix",
      [](const Array& q, const Array& g, const std::string& metric) {
        auto mt = parse_metric(metric);
        if (!mt) throw std::invalid_argument("unknown metric '" + metric + "'");
        return from_matrix(distance_matrix(to_matrix(q), to_matrix(g), *mt));
      },
      py::arg("query"), py::arg("gallery"), py::arg("metric") = "euclidean");
  m.def(
      "evaluate",
      [](const Array& dist, const std::vector<int>& q_ids, const std::vector<int>& g_ids,
         const std::vector<int>& q_cams, const std::vector<int>& g_cams, std::size_t k_max) {
        auto r = evaluate_reid(to_matrix(dist), q_ids, g_ids, q_cams, g_cams, k_max);
        py::dict d;
        d["cmc"] = r.cmc;
        d["map"] = r.map;
        d["ap"] = r.ap;
        d["valid_queries"] = r.valid_queries;
        return d;
      },
      py::arg("distmat"), py::arg("q_ids"), py::arg("g_ids"), py::arg("q_cams"),
      py::arg("g_cams"), py::arg("k_max") = 20);

  m.def(
      "gen_synthetic",
      [](std::size_t identities, std::size_t per_id, std::size_t dim, double sigma,
         double spread, std::uint64_t seed) {
        SyntheticSpec s;
        s.identities = identities;
        s.per_id = per_id;
        s.dim = dim;
        s.sigma = sigma;
        s.spread = spread;
        s.seed = seed;
        auto d = gen_synthetic(s);
        return py::make_tuple(from_matrix(d.samples), d.ids, d.cams);
      },
      py::arg("identities") = 50, py::arg("per_id") = 20, py::arg("dim") = 32,
      py::arg("sigma") = 0.5, py::arg("spread") = 5.0, py::arg("seed") = 0);
  m.def(
      "random_erase",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& image,
         double probability, std::uint64_t seed) {
        if (image.ndim() != 3) throw std::invalid_argument("expected an H x W x C image");
        Image img(static_cast<std::size_t>(image.shape(0)), static_cast<std::size_t>(image.shape(1)),
                  static_cast<std::size_t>(image.shape(2)));
        std::copy(image.data(), image.data() + image.size(), img.data.begin());
        ReaParams p;
        p.probability = probability;
        img = random_erase(std::move(img), p, seed);
        py::array_t<double> out({img.height, img.width, img.channels});
        std::copy(img.data.begin(), img.data.end(), out.mutable_data());
        return out;
      },
      py::arg("image"), py::arg("probability") = 0.5, py::arg("seed") = 0);

  m.def(
      "arch_counts",
      [](const std::string& variant) {
        auto w = arch::parse_width(variant);
        if (!w) throw std::invalid_argument("variant must be 1x or 2x");
        const auto spec = arch::build_network(*w);
        const auto ref = arch::reference_totals(*w);
        py::list rows;
        for (const auto& r : arch::breakdown(spec)) {
          py::dict row;
          row["name"] = r.name;
          row["params"] = r.params;
          row["flops"] = r.flops;
          row["assumption_based"] = r.assumption_based;
          rows.append(row);
        }
        py::dict d;
        d["params"] = arch::count_params(spec);
        d["flops"] = arch::count_flops(spec);
        d["reference_params"] = ref.params;
        d["reference_flops"] = ref.flops;
        d["chain_problems"] = arch::check_chain(spec);
        d["layers"] = rows;
        return d;
      },
      py::arg("variant") = "1x");

  m.def(
      "track_sim",
      [](std::uint64_t seed, double sigma, double tau, std::size_t people) {
        track::ScenarioSpec spec;
        spec.seed = seed;
        spec.sigma = sigma;
        spec.people = people;
        const auto sc = track::gen_scenario(spec);
        const auto t =
            track::run_gate(sc, track::noisy_embedder(sc.appearance, sigma), {tau, 5, seed + 1});
        py::dict d;
        d["mota"] = track::mota(t.observations);
        d["idf1"] = track::idf1(t.observations);
        d["tracks_opened"] = t.tracks_opened;
        d["reid_hits"] = t.reid_hits;
        d["events"] = sc.events.size();
        return d;
      },
      py::arg("seed") = 1, py::arg("sigma") = 0.3, py::arg("tau") = 0.8, py::arg("people") = 7);

  m.def(
      "train_toy",
      [](const std::map<std::string, std::string>& overrides) {
        RunConfig cfg;
        for (const auto& [k, v] : overrides) set_config_value(cfg, k, v);
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(cfg);
        }
        py::dict d;
        d["untrained"] = score(r.untrained);
        d["final"] = score(r.final_score);
        d["seconds"] = r.seconds;
        py::list trace;
        for (const auto& e : r.trace) trace.append(py::make_tuple(e.epoch, e.lr, e.loss, e.map));
        d["trace"] = trace;
        if (r.swa) d["swa"] = score(*r.swa);
        py::list snaps;
        for (const auto& s : r.snapshots) snaps.append(score(s.score));
        d["snapshots"] = snaps;
        return d;
      },
      py::arg("config") = std::map<std::string, std::string>{},
      "Train the toy embedder; config values are strings as in a config file.");

  m.def(
      "gradient_suite",
      [](std::size_t seeds) {
        GradSuiteOptions o;
        o.seeds = seeds;
        py::list out;
        for (const auto& e : run_gradient_suite(o)) {
          py::dict d;
          d["name"] = e.name;
          d["pass"] = e.pass;
          d["worst_rel_error"] = e.worst_rel_error;
          out.append(d);
        }
        return out;
      },
      py::arg("seeds") = 10);

  m.def(
      "cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = cli_dispatch(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run a CLI subcommand; returns (exit code, stdout, stderr).");

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
}
