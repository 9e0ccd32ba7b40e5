#include <doctest.h>

#include <map>
#include <sstream>

#include "fixtures.hpp"
#include "reidlab/tracksim.hpp"

using namespace reidlab;
using namespace reidlab::track;

TEST_CASE("hand-computed metric cases") {
  for (const auto& c : fixture::track_cases()) {
    CAPTURE(c.name);
    CHECK(mota(c.obs) == doctest::Approx(c.mota).epsilon(1e-15));
    CHECK(idf1(c.obs) == doctest::Approx(c.idf1).epsilon(1e-15));
  }
  auto parts = mota_parts(fixture::track_cases()[0].obs);
  CHECK(parts.gt == 100);
  CHECK(parts.misses == 2);
  CHECK(parts.false_positives == 1);
  CHECK(parts.id_switches == 1);
}

TEST_CASE("track relabeling leaves the metrics unchanged") {
  auto obs = fixture::track_cases()[0].obs;
  const double m = mota(obs), f = idf1(obs);
  for (auto& o : obs)
    if (o.track >= 0) o.track = 40 - o.track;
  CHECK(mota(obs) == m);
  CHECK(idf1(obs) == f);
}

TEST_CASE("a new visit does not count as a switch") {
  std::vector<Observation> obs = {{0, 0, 1, 0}, {1, 0, 1, 0}, {5, 0, 2, 1}, {6, 0, 2, 1}};
  CHECK(mota_parts(obs).id_switches == 0);
  CHECK_THROWS(mota(std::vector<Observation>{{0, -1, 1, 0}}));
  CHECK_THROWS(idf1({}));
}

TEST_CASE("max weight matching on a small instance") {
  // Brute force over the 6 permutations.
  Matrix w(3, 3, {4, 1, 3, 2, 0, 5, 3, 2, 2});
  auto m = max_weight_matching(w);
  double got = 0.0;
  for (std::size_t r = 0; r < 3; ++r) got += w(r, static_cast<std::size_t>(m[r]));
  std::vector<int> perm = {0, 1, 2};
  double best = 0.0;
  do {
    double s = 0.0;
    for (std::size_t r = 0; r < 3; ++r) s += w(r, static_cast<std::size_t>(perm[r]));
    best = std::max(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  CHECK(got == best);
  // Rectangular: more rows than columns leaves one unmatched.
  auto rect = max_weight_matching(Matrix(3, 2, {1, 0, 0, 1, 5, 5}));
  CHECK(std::count(rect.begin(), rect.end(), -1) == 1);
}

TEST_CASE("scenario generation") {
  ScenarioSpec spec;
  spec.seed = 4;
  auto s = gen_scenario(spec);
  CHECK(validate_events(s.events).empty());
  CHECK(max_concurrent(s.events) <= 7);
  auto again = gen_scenario(spec);
  CHECK(again.events == s.events);
  CHECK(again.appearance == s.appearance);

  spec.reentry_rate = 0.0;
  auto once = gen_scenario(spec);
  std::map<int, int> entries;
  for (const auto& e : once.events)
    if (e.kind == EventKind::Enter) ++entries[e.person];
  for (auto [p, n] : entries) CHECK(n == 1);
  auto gate = run_gate(once, noisy_embedder(once.appearance, 0.0), {});
  CHECK(gate.reid_hits == 0);
  CHECK(gate.false_matches == 0);

  spec.people = 1;
  CHECK_THROWS(gen_scenario(spec));
}

TEST_CASE("event csv round trip and errors") {
  ScenarioSpec spec;
  spec.seed = 2;
  auto s = gen_scenario(spec);
  std::stringstream ss;
  write_events(s.events, ss);
  CHECK(read_events(ss) == s.events);
  std::istringstream bad("time,person,kind,camera\n1.0,2,wander,0\n");
  CHECK_THROWS(read_events(bad));
}

TEST_CASE("gate direction") {
  ScenarioSpec spec;
  spec.seed = 1;
  auto s = gen_scenario(spec);
  auto oracle = run_gate(s, noisy_embedder(s.appearance, 0.0), {0.5, 5, 1});
  auto disabled = run_gate(s, noisy_embedder(s.appearance, 0.0), {0.0, 5, 1});
  CHECK(oracle.reid_misses == 0);
  CHECK(idf1(oracle.observations) == 1.0);
  CHECK(disabled.tracks_opened == disabled.entry_track.size());
  CHECK(idf1(disabled.observations) <= idf1(oracle.observations) - 0.2);
  CHECK(mota(disabled.observations) == mota(oracle.observations));

  auto noisy = run_gate(s, noisy_embedder(s.appearance, 1.5), {0.8, 5, 1});
  const double f = idf1(noisy.observations);
  CHECK(f >= idf1(disabled.observations));
  CHECK(f <= 1.0);
}

TEST_CASE("corruption adds misses and false positives") {
  ScenarioSpec spec;
  spec.seed = 1;
  auto s = gen_scenario(spec);
  auto g = run_gate(s, noisy_embedder(s.appearance, 0.0), {0.5, 5, 1});
  auto c = corrupt(g.observations, {0.05, 0.1, 0.0, 3});
  auto parts = mota_parts(c);
  CHECK(parts.misses > 0);
  CHECK(parts.false_positives > 0);
  CHECK(mota(c) < 1.0);
}
