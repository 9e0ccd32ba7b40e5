#include "reidlab/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "reidlab/archshape.hpp"
#include "reidlab/data.hpp"
#include "reidlab/evaluate.hpp"
#include "reidlab/gradsuite.hpp"
#include "reidlab/schedule.hpp"
#include "reidlab/tracksim.hpp"
#include "reidlab/trainer.hpp"

namespace reidlab {

namespace {

using nlohmann::json;

constexpr int kOk = 0, kFailed = 1, kUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// --key value / --key=value pairs left over by the subcommand parser.
RunConfig apply_overrides(RunConfig cfg, const std::vector<std::string>& extras) {
  const auto keys = config_keys();
  for (std::size_t i = 0; i < extras.size(); ++i) {
    std::string arg = extras[i];
    if (arg.rfind("--", 0) != 0) throw UsageError("unexpected argument '" + arg + "'");
    arg = arg.substr(2);
    std::string value;
    if (const auto eq = arg.find('='); eq != std::string::npos) {
      value = arg.substr(eq + 1);
      arg.resize(eq);
    } else {
      if (i + 1 >= extras.size()) throw UsageError("--" + arg + " needs a value");
      value = extras[++i];
    }
    std::replace(arg.begin(), arg.end(), '-', '_');
    if (std::find(keys.begin(), keys.end(), arg) == keys.end())
      throw UsageError("unknown option --" + arg);
    set_config_value(cfg, arg, value);
  }
  return cfg;
}

// ---------------------------------------------------------------------------

int run_grad_check(const GradSuiteOptions& opt, std::ostream& out, std::ostream& err) {
  const auto start = std::chrono::steady_clock::now();
  const auto entries = run_gradient_suite(opt);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  bool all = true;
  json checks = json::array();
  for (const auto& e : entries) {
    all = all && e.pass;
    checks.push_back({{"name", e.name}, {"seeds", e.seeds}, {"worst_rel_error", e.worst_rel_error},
                      {"pass", e.pass}, {"message", e.message}});
    char line[160];
    std::snprintf(line, sizeof line, "%-28s %3zu seeds  worst %.3e  %s\n", e.name.c_str(),
                  e.seeds, e.worst_rel_error, e.pass ? "PASS" : "FAIL");
    err << line;
  }
  out << json{{"pass", all}, {"tol", opt.tol}, {"h", opt.h}, {"seconds", secs}, {"checks", checks}}
             .dump(2)
      << "\n";
  return all ? kOk : kFailed;
}

int run_train(const RunConfig& cfg, bool swag_report, std::ostream& out, std::ostream& err) {
  TrainResult r;
  try {
    r = train(cfg);
  } catch (const TrainingDiverged& e) {
    err << "error: " << e.what() << "\n";
    out << json{{"error", "diverged"}, {"epoch", e.epoch()}, {"lr", e.lr()}}.dump(2) << "\n";
    return kFailed;
  }
  err << "epoch  phase    lr         loss      rank1   mAP\n";
  for (const auto& e : r.trace) {
    char line[160];
    std::snprintf(line, sizeof line, "%5d  %-7s  %.3e  %8.4f  %.4f  %.4f\n", e.epoch,
                  e.phase.c_str(), e.lr, e.loss, e.rank1, e.map);
    err << line;
  }
  if (swag_report && r.swa) {
    double best = 0.0;
    for (const auto& s : r.snapshots) best = std::max(best, s.score.map);
    err << "best snapshot mAP " << fixed(best) << ", SWA mAP " << fixed(r.swa->map) << "\n";
  }
  out << summary_json(r) << "\n";
  return kOk;
}

int run_eval(const std::string& qpath, const std::string& gpath, const std::string& metric_name,
             std::size_t k, std::ostream& out, std::ostream& err) {
  const auto metric = parse_metric(metric_name);
  if (!metric) throw UsageError("unknown metric '" + metric_name + "'");
  IdentityDataset q, g;
  try {
    q = load_embeddings(qpath);
    g = load_embeddings(gpath);
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kFailed;
  }
  const EvalResult r = evaluate_reid(distance_matrix(q.samples, g.samples, *metric), q.ids,
                                     g.ids, q.cams, g.cams, k);
  err << "rank-1 " << fixed(r.rank1()) << "  mAP " << fixed(r.map) << "  valid queries "
      << r.valid_queries << "/" << q.size() << "\n";
  out << json{{"rank1", r.rank1()}, {"map", r.map}, {"cmc", r.cmc},
              {"valid_queries", r.valid_queries}, {"queries", q.size()}}
             .dump(2)
      << "\n";
  return kOk;
}

int run_gen_embeddings(const RunConfig& cfg, const std::string& dir, std::ostream& out,
                       std::ostream& err) {
  const ToyData data = make_toy_data(cfg);
  std::filesystem::create_directories(dir);
  const auto qp = std::filesystem::path(dir) / "query.csv";
  const auto gp = std::filesystem::path(dir) / "gallery.csv";
  save_embeddings(data.heldout.query, qp);
  save_embeddings(data.heldout.gallery, gp);
  err << "wrote " << data.heldout.query.size() << " queries and " << data.heldout.gallery.size()
      << " gallery rows\n";
  out << json{{"query", qp.string()}, {"gallery", gp.string()}}.dump(2) << "\n";
  return kOk;
}

int run_archcalc(const std::string& variant, const std::string& convention, bool unfused,
                 std::ostream& out, std::ostream& err) {
  const auto width = arch::parse_width(variant);
  if (!width) throw UsageError("unknown variant '" + variant + "' (expected 1x or 2x)");
  arch::CountOptions opt;
  opt.bn_fused = !unfused;
  if (convention == "1mac")
    opt.convention = arch::FlopConvention::Mac;
  else if (convention == "2mac")
    opt.convention = arch::FlopConvention::TwoMac;
  else
    throw UsageError("unknown flops convention '" + convention + "' (expected 1mac or 2mac)");

  const auto spec = arch::build_network(*width);
  const auto rows = arch::breakdown(spec, opt);
  const auto problems = arch::check_chain(spec);
  std::uint64_t params = 0, flops = 0;
  json layers = json::array();
  err << "layer                branch  kind        in   out  s  rep  input     params      MFLOPs\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& l = spec.layers[i];
    const auto& row = rows[i];
    params += row.params;
    flops += row.flops;
    json items = json::array();
    for (const auto& it : row.items)
      items.push_back({{"name", it.name}, {"params", it.params}, {"flops", it.flops}});
    const std::string input = (l.regions > 1 ? std::to_string(l.regions) + "x" : "") +
                              std::to_string(l.in_h) + "x" + std::to_string(l.in_w);
    layers.push_back({{"name", row.name},
                      {"kind", arch::to_string(row.kind)},
                      {"branch", arch::to_string(row.branch)},
                      {"in_channels", l.in_channels},
                      {"out_channels", l.out_channels},
                      {"stride", l.stride},
                      {"repeat", l.repeat},
                      {"input", input},
                      {"params", row.params},
                      {"flops", row.flops},
                      {"assumption_based", row.assumption_based},
                      {"items", items}});
    char line[200];
    std::snprintf(line, sizeof line, "%-20s %-7s %-10s %4zu %5zu %2zu %4zu  %-8s %9llu %11.2f%s\n",
                  row.name.c_str(), std::string(arch::to_string(row.branch)).c_str(),
                  std::string(arch::to_string(row.kind)).c_str(), l.in_channels,
                  l.out_channels, l.stride, l.repeat, input.c_str(),
                  static_cast<unsigned long long>(row.params), row.flops / 1e6,
                  row.assumption_based ? "  *" : "");
    err << line;
  }
  const auto ref = arch::reference_totals(*width);
  const double ref_flops =
      ref.flops * (opt.convention == arch::FlopConvention::TwoMac ? 2.0 : 1.0);
  const double pr = static_cast<double>(params) / ref.params;
  const double fr = static_cast<double>(flops) / ref_flops;
  err << "total params " << params << " (" << fixed(pr, 3) << " of reference), FLOPs " << flops
      << " (" << fixed(fr, 3) << " of reference); * = attention internals assumed\n";
  for (const auto& p : problems) err << "chain: " << p << "\n";
  out << json{{"variant", arch::to_string(*width)},
              {"flops_convention", convention},
              {"bn_fused", opt.bn_fused},
              {"total_params", params},
              {"total_flops", flops},
              {"reference", {{"params", ref.params}, {"flops", ref_flops}}},
              {"ratio", {{"params", pr}, {"flops", fr}}},
              {"within_tolerance",
               {{"params", std::abs(pr - 1.0) <= 0.2}, {"flops", std::abs(fr - 1.0) <= 0.2}}},
              {"chain_ok", problems.empty()},
              {"chain_problems", problems},
              {"feature_dim", spec.feature_dim},
              {"layers", layers}}
             .dump(2)
      << "\n";
  return problems.empty() ? kOk : kFailed;
}

struct TrackArgs {
  track::ScenarioSpec spec;
  double tau = 0.8;
  std::size_t gallery = 5;
  track::CorruptionOptions corruption;
  std::string events_out;
  std::string taus = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0,1.2";
};

void add_scenario_options(CLI::App* sub, TrackArgs& a) {
  sub->add_option("--people", a.spec.people, "people in the scenario")->capture_default_str();
  sub->add_option("--duration", a.spec.duration, "seconds")->capture_default_str();
  sub->add_option("--sigma", a.spec.sigma, "appearance noise")->capture_default_str();
  sub->add_option("--reentry", a.spec.reentry_rate, "re-entry probability")->capture_default_str();
  sub->add_option("--max-concurrent", a.spec.max_concurrent)->capture_default_str();
  sub->add_option("--fps", a.spec.fps, "observations per second")->capture_default_str();
  sub->add_option("--dim", a.spec.dim, "appearance dimension")->capture_default_str();
  sub->add_option("--seed", a.spec.seed)->capture_default_str();
  sub->add_option("--gallery", a.gallery, "embeddings kept per track")->capture_default_str();
}

json track_json(const track::TrackAssignment& t, const std::vector<track::Observation>& obs,
                double tau) {
  const auto parts = track::mota_parts(obs);
  return {{"tau", tau},
          {"mota", parts.value()},
          {"idf1", track::idf1(obs)},
          {"tracks_opened", t.tracks_opened},
          {"reid_hits", t.reid_hits},
          {"reid_misses", t.reid_misses},
          {"false_matches", t.false_matches},
          {"gt_observations", parts.gt},
          {"misses", parts.misses},
          {"false_positives", parts.false_positives},
          {"id_switches", parts.id_switches}};
}

int run_track_sim(const TrackArgs& a, std::ostream& out, std::ostream& err) {
  const auto sc = track::gen_scenario(a.spec);
  if (!a.events_out.empty()) {
    std::ofstream f(a.events_out);
    if (!f) throw std::runtime_error("cannot write " + a.events_out);
    track::write_events(sc.events, f);
  }
  const auto embedder = track::noisy_embedder(sc.appearance, a.spec.sigma);
  const auto t = track::run_gate(sc, embedder, {a.tau, a.gallery, a.spec.seed + 1});
  const auto obs = track::corrupt(t.observations, a.corruption);
  json j = track_json(t, obs, a.tau);
  j["events"] = sc.events.size();
  j["max_concurrent"] = track::max_concurrent(sc.events);
  err << "MOTA " << fixed(j["mota"].get<double>()) << "  IDF1 " << fixed(j["idf1"].get<double>())
      << "  tracks " << t.tracks_opened << "  re-id hits " << t.reid_hits << "  misses "
      << t.reid_misses << "\n";
  out << j.dump(2) << "\n";
  return kOk;
}

int run_tau_sweep(const TrackArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<double> taus;
  std::stringstream ss(a.taus);
  for (std::string cell; std::getline(ss, cell, ',');) {
    try {
      taus.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw UsageError("bad tau '" + cell + "'");
    }
  }
  if (taus.empty()) throw UsageError("--taus is empty");
  const auto sc = track::gen_scenario(a.spec);
  const auto embedder = track::noisy_embedder(sc.appearance, a.spec.sigma);
  json rows = json::array();
  double best_tau = taus.front(), best = -1.0;
  err << "  tau    IDF1    MOTA  tracks\n";
  for (double tau : taus) {
    const auto t = track::run_gate(sc, embedder, {tau, a.gallery, a.spec.seed + 1});
    json row = track_json(t, t.observations, tau);
    const double f = row["idf1"].get<double>();
    if (f > best) best = f, best_tau = tau;
    char line[96];
    std::snprintf(line, sizeof line, "%5.2f  %.4f  %.4f  %6zu\n", tau, f,
                  row["mota"].get<double>(), t.tracks_opened);
    err << line;
    rows.push_back(std::move(row));
  }
  out << json{{"best_tau", best_tau}, {"best_idf1", best}, {"rows", rows}}.dump(2) << "\n";
  return kOk;
}

int run_schedule_dump(const std::string& phase, int epochs, const CyclicSchedule& cyc,
                      std::ostream& out, std::ostream& err) {
  json rows = json::array();
  if (phase == "warmup") {
    if (epochs == 350) {
      for (int t = 1; t <= 350; ++t) rows.push_back({{"epoch", t}, {"lr", warmup_lr(t)}});
    } else {
      const auto s = WarmupSchedule::rescaled(epochs);
      for (int t = 1; t <= epochs; ++t) rows.push_back({{"epoch", t}, {"lr", s.lr(t)}});
    }
  } else if (phase == "cyclic") {
    for (int e = 0; e < cyc.total_epochs(); ++e)
      rows.push_back({{"epoch", e}, {"cycle", e / cyc.cycle_length}, {"lr", cyclic_lr(e, cyc)},
                      {"snapshot", is_snapshot_epoch(e, cyc)}});
  } else {
    throw UsageError("unknown phase '" + phase + "' (expected warmup or cyclic)");
  }
  err << phase << ": " << rows.size() << " epochs\n";
  out << json{{"phase", phase}, {"rows", rows}}.dump(2) << "\n";
  return kOk;
}

int run_rea_check(std::size_t trials, std::uint64_t seed, double probability, std::ostream& out,
                  std::ostream& err) {
  ReaParams p;
  p.probability = probability;
  p.fill = EraseFill::Mean;
  p.mean = {0.5, 0.5, 0.5};
  p.validate();
  RandomErasing rea(p);
  std::mt19937_64 rng(seed);
  Image img(160, 64, 3, 0.0);
  double min_area = 1.0, max_area = 0.0, min_aspect = 1e9, max_aspect = 0.0;
  bool in_range = true;
  for (std::size_t i = 0; i < trials; ++i) {
    const auto rect = rea.apply(img, rng);
    if (!rect) continue;
    const double s = rect->area_ratio(img), r = rect->aspect();
    min_area = std::min(min_area, s);
    max_area = std::max(max_area, s);
    min_aspect = std::min(min_aspect, r);
    max_aspect = std::max(max_aspect, r);
    in_range = in_range && s > p.area_lo && s < p.area_hi && r > p.aspect_lo && r < p.aspect_hi;
  }
  const double freq = static_cast<double>(rea.erased()) / static_cast<double>(trials);
  const bool freq_ok = std::abs(freq - probability) <= 0.02;
  err << "erased " << rea.erased() << "/" << trials << " (" << fixed(freq) << "), area ["
      << fixed(min_area) << ", " << fixed(max_area) << "], aspect [" << fixed(min_aspect) << ", "
      << fixed(max_aspect) << "]\n";
  out << json{{"trials", trials},
              {"erased", rea.erased()},
              {"frequency", freq},
              {"failed_placements", rea.failed_placements()},
              {"area_ratio", {min_area, max_area}},
              {"aspect", {min_aspect, max_aspect}},
              {"frequency_ok", freq_ok},
              {"ranges_ok", in_range},
              {"pass", freq_ok && in_range}}
             .dump(2)
      << "\n";
  return freq_ok && in_range ? kOk : kFailed;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Compact person re-identification toolkit", "reidlab"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  GradSuiteOptions grad;
  bool grad_all = false;
  auto* grad_cmd = app.add_subcommand("grad-check", "finite-difference gradient checks");
  grad_cmd->add_flag("--all", grad_all, "run every op and loss (default)");
  grad_cmd->add_option("--op", grad.only, "run a single case");
  grad_cmd->add_option("--seeds", grad.seeds)->capture_default_str();
  grad_cmd->add_option("--tol", grad.tol)->capture_default_str();
  grad_cmd->add_option("--step", grad.h, "finite-difference step")->capture_default_str();
  grad_cmd->add_flag("--list", "list case names");

  std::string config_path;
  auto* train_cmd = app.add_subcommand("train-toy", "train the toy embedder");
  train_cmd->add_option("--config", config_path, "key = value config file");
  train_cmd->allow_extras();
  train_cmd->footer("Any config key can be overridden with --key value.");

  auto* swag_cmd = app.add_subcommand("swag-demo", "toy run with the cyclic + SWAG phase");
  swag_cmd->add_option("--config", config_path, "key = value config file");
  swag_cmd->allow_extras();

  std::string qpath, gpath, metric = "euclidean";
  std::size_t k_max = 20;
  auto* eval_cmd = app.add_subcommand("eval", "CMC / mAP from embedding files");
  eval_cmd->add_option("--query", qpath)->required();
  eval_cmd->add_option("--gallery", gpath)->required();
  eval_cmd->add_option("--metric", metric)->capture_default_str();
  eval_cmd->add_option("--k", k_max)->capture_default_str();

  std::string out_dir = "embeddings";
  auto* gen_cmd = app.add_subcommand("gen-embeddings", "write held-out synthetic query/gallery files");
  gen_cmd->add_option("--out", out_dir)->capture_default_str();
  gen_cmd->allow_extras();

  std::string variant = "1x", convention = "1mac";
  bool unfused = false;
  auto* arch_cmd = app.add_subcommand("archcalc", "parameter and FLOP accounting");
  arch_cmd->add_option("--variant", variant, "1x or 2x")->capture_default_str();
  arch_cmd->add_option("--flops-convention", convention, "1mac or 2mac")->capture_default_str();
  arch_cmd->add_flag("--bn-unfused", unfused, "count batch-norm FLOPs");

  TrackArgs track_args;
  auto* track_cmd = app.add_subcommand("track-sim", "room tracking with a ReID gate");
  add_scenario_options(track_cmd, track_args);
  track_cmd->add_option("--tau", track_args.tau, "gate threshold, 0 disables")->capture_default_str();
  track_cmd->add_option("--miss-rate", track_args.corruption.miss_rate);
  track_cmd->add_option("--fp-rate", track_args.corruption.fp_rate);
  track_cmd->add_option("--switch-rate", track_args.corruption.switch_rate);
  track_cmd->add_option("--events-out", track_args.events_out, "write the event log CSV");

  auto* sweep_cmd = app.add_subcommand("tau-sweep", "IDF1 over a grid of gate thresholds");
  add_scenario_options(sweep_cmd, track_args);
  sweep_cmd->add_option("--taus", track_args.taus, "comma separated")->capture_default_str();

  std::string phase = "warmup";
  int sched_epochs = 350;
  CyclicSchedule cyc;
  auto* sched_cmd = app.add_subcommand("schedule-dump", "learning-rate schedules");
  sched_cmd->add_option("--phase", phase, "warmup or cyclic")->capture_default_str();
  sched_cmd->add_option("--epochs", sched_epochs, "warmup length")->capture_default_str()
      ->check(CLI::PositiveNumber);
  sched_cmd->add_option("--cycles", cyc.cycles)->capture_default_str()->check(CLI::PositiveNumber);
  sched_cmd->add_option("--cycle-length", cyc.cycle_length)->capture_default_str()
      ->check(CLI::PositiveNumber);
  sched_cmd->add_option("--base-lr", cyc.base_lr)->capture_default_str();

  std::size_t trials = 10000;
  std::uint64_t rea_seed = 0;
  double rea_prob = 0.5;
  auto* rea_cmd = app.add_subcommand("rea-check", "random erasing statistics");
  rea_cmd->add_option("--trials", trials)->capture_default_str()->check(CLI::PositiveNumber);
  rea_cmd->add_option("--seed", rea_seed)->capture_default_str();
  rea_cmd->add_option("--probability", rea_prob)->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (grad_cmd->parsed()) {
      if (grad_cmd->count("--list")) {
        out << json(gradient_suite_names()).dump(2) << "\n";
        return kOk;
      }
      (void)grad_all;
      if (!grad.only.empty()) {
        const auto names = gradient_suite_names();
        if (std::find(names.begin(), names.end(), grad.only) == names.end())
          throw UsageError("unknown grad-check case '" + grad.only + "' (see --list)");
      }
      return run_grad_check(grad, out, err);
    }
    if (train_cmd->parsed() || swag_cmd->parsed() || gen_cmd->parsed()) {
      CLI::App* cmd = train_cmd->parsed() ? train_cmd : swag_cmd->parsed() ? swag_cmd : gen_cmd;
      RunConfig cfg;
      if (cmd == swag_cmd) cfg.swag = true;
      if (!config_path.empty()) cfg = load_config(config_path, cfg);
      cfg = apply_overrides(cfg, cmd->remaining());
      if (cmd == gen_cmd) return run_gen_embeddings(cfg, out_dir, out, err);
      return run_train(cfg, cmd == swag_cmd, out, err);
    }
    if (eval_cmd->parsed()) return run_eval(qpath, gpath, metric, k_max, out, err);
    if (arch_cmd->parsed()) return run_archcalc(variant, convention, unfused, out, err);
    if (track_cmd->parsed()) return run_track_sim(track_args, out, err);
    if (sweep_cmd->parsed()) return run_tau_sweep(track_args, out, err);
    if (sched_cmd->parsed()) return run_schedule_dump(phase, sched_epochs, cyc, out, err);
    if (rea_cmd->parsed()) return run_rea_check(trials, rea_seed, rea_prob, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kFailed;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailed;
  }
  return kUsage;
}

int cli_dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_dispatch(args, std::cout, std::cerr);
}

}  // namespace reidlab
