#include <doctest.h>

#include <filesystem>
#include <json.hpp>
#include <sstream>

#include "reidlab/cli.hpp"
#include "reidlab/plot.hpp"
#include "reidlab/schedule.hpp"
#include "reidlab/trainer.hpp"

using namespace reidlab;
using nlohmann::json;

namespace {

RunConfig quick_config() {
  RunConfig cfg;
  cfg.identities = 12;
  cfg.per_id = 8;
  cfg.heldout_identities = 10;
  cfg.epochs = 20;
  cfg.hidden = 16;
  cfg.embed_dim = 8;
  return cfg;
}

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = cli_dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST_CASE("config parsing") {
  auto cfg = parse_config("# comment\nepochs = 12\nloss = batch-hard\nswag = true\n");
  CHECK(cfg.epochs == 12);
  CHECK(cfg.loss == TripletVariant::BatchHard);
  CHECK(cfg.swag);
  CHECK(parse_config(format_config(cfg)).epochs == 12);
  CHECK_THROWS_AS(parse_config("nonsense = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("epochs = many\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("epochs 12\n"), ConfigError);
  for (const auto& key : config_keys()) CHECK_NOTHROW(get_config_value(cfg, key));
}

TEST_CASE("model layout and weight round trip") {
  ToyModel m(model_config(quick_config(), 5), 3);
  auto w = m.weights();
  CHECK(w.values.size() == m.layout().total());
  for (auto& v : w.values) v *= 0.5;
  m.set_weights(w);
  CHECK(m.weights().values == w.values);
  Matrix x(2, 32, 0.3);
  auto e = m.embed_rows(x);
  double n = 0.0;
  for (double v : e.row(0)) n += v * v;
  CHECK(n == doctest::Approx(1.0));
}

TEST_CASE("training is deterministic and learns") {
  auto cfg = quick_config();
  auto a = train(cfg);
  auto b = train(cfg);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].loss == b.trace[i].loss);
    CHECK(a.trace[i].map == b.trace[i].map);
  }
  CHECK(a.final_weights.values == b.final_weights.values);
  CHECK(a.final_score.map > a.untrained.map);
}

TEST_CASE("swag phase records one snapshot per cycle") {
  auto cfg = quick_config();
  cfg.swag = true;
  cfg.cycles = 3;
  cfg.cycle_length = 2;
  auto r = train(cfg);
  CHECK(r.snapshots.size() == 3);
  REQUIRE(r.posterior);
  CHECK(r.posterior->count() == 3);
  REQUIRE(r.swa);
  CHECK(r.final_score.map == r.swa->map);
}

TEST_CASE("divergence is reported") {
  auto cfg = quick_config();
  cfg.lr_peak = 1e6;
  cfg.epochs = 20;
  CHECK_THROWS_AS(train(cfg), TrainingDiverged);
}

TEST_CASE("run artifacts") {
  auto cfg = quick_config();
  cfg.epochs = 2;
  auto dir = std::filesystem::temp_directory_path() / "reidlab_test_run";
  std::filesystem::remove_all(dir);
  write_run_artifacts(train(cfg), dir);
  for (const char* f : {"config.txt", "metrics.csv", "summary.json", "loss.svg", "map.svg"})
    CHECK(std::filesystem::exists(dir / f));
  auto summary = json::parse(summary_json(train(cfg)));
  CHECK(summary.contains("final"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("svg chart") {
  auto svg = line_chart_svg("t", "epoch", {1, 2, 3}, {{"loss", {3, 2, 1}}});
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("polyline") != std::string::npos);
}

TEST_CASE("cli archcalc") {
  auto r = cli({"archcalc", "--variant", "2x"});
  REQUIRE(r.code == 0);
  auto j = json::parse(r.out);
  const double p = j["total_params"].get<double>();
  CHECK(std::abs(p / 6.4e6 - 1.0) <= 0.2);
  CHECK(j["layers"].size() > 10);
  CHECK(cli({"archcalc", "--variant", "3x"}).code == 2);
}

TEST_CASE("cli schedule dump") {
  auto r = cli({"schedule-dump", "--phase", "warmup"});
  REQUIRE(r.code == 0);
  auto rows = json::parse(r.out)["rows"];
  REQUIRE(rows.size() == 350);
  for (int t = 1; t <= 350; ++t) CHECK(rows[t - 1]["lr"].get<double>() == warmup_lr(t));
  auto c = json::parse(cli({"schedule-dump", "--phase", "cyclic"}).out)["rows"];
  CHECK(c.size() == 525);
  CHECK(cli({"schedule-dump", "--phase", "sideways"}).code == 2);
}

TEST_CASE("cli grad-check and usage errors") {
  auto r = cli({"grad-check", "--op", "exp", "--seeds", "2"});
  CHECK(r.code == 0);
  CHECK(json::parse(r.out)["pass"].get<bool>());
  CHECK(cli({"grad-check", "--op", "nope"}).code == 2);
  CHECK(cli({"no-such-command"}).code == 2);
  CHECK(cli({"train-toy", "--no-such-key", "3"}).code == 2);
}

TEST_CASE("cli track-sim and rea-check") {
  auto t = json::parse(cli({"track-sim", "--sigma", "0", "--tau", "0.5"}).out);
  CHECK(t["idf1"].get<double>() == 1.0);
  auto r = cli({"rea-check"});
  REQUIRE(r.code == 0);
  auto j = json::parse(r.out);
  CHECK(j["ranges_ok"].get<bool>());
}
