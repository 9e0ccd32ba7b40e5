#include "reidlab/tracksim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>

#include "reidlab/data.hpp"

namespace reidlab::track {

std::string_view to_string(EventKind k) { return k == EventKind::Enter ? "enter" : "exit"; }

namespace {

void check_spec(const ScenarioSpec& s) {
  auto bad = [](const std::string& m) { throw std::invalid_argument("gen_scenario: " + m); };
  if (s.people < 2) bad("need at least 2 people");
  if (s.max_concurrent == 0) bad("max_concurrent must be positive");
  if (!(s.duration > 0.0)) bad("duration must be positive");
  if (!(s.min_stay > 0.0) || s.max_stay < s.min_stay) bad("stay bounds must satisfy 0 < min <= max");
  if (!(s.min_gap > 0.0) || s.max_gap < s.min_gap) bad("gap bounds must satisfy 0 < min <= max");
  if (!(s.reentry_rate >= 0.0 && s.reentry_rate <= 1.0)) bad("reentry_rate must be in [0,1]");
  if (!(s.sigma >= 0.0)) bad("sigma must be >= 0");
  if (!(s.fps > 0.0)) bad("fps must be positive");
  if (s.dim == 0 || s.cameras <= 0) bad("dim and cameras must be positive");
}

struct Pending {
  double time;
  int order;  // 0 = exit, 1 = arrival; exits first on ties
  int person;
  bool operator>(const Pending& o) const {
    if (time != o.time) return time > o.time;
    if (order != o.order) return order > o.order;
    return person > o.person;
  }
};

std::vector<double> normalized(std::vector<double> v) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  if (ss > 0.0) {
    const double inv = 1.0 / std::sqrt(ss);
    for (double& x : v) x *= inv;
  }
  return v;
}

}  // namespace

Scenario gen_scenario(const ScenarioSpec& spec) {
  check_spec(spec);
  Scenario sc;
  sc.spec = spec;

  SyntheticSpec looks;
  looks.identities = spec.people;
  looks.per_id = 1;
  looks.dim = spec.dim;
  looks.sigma = 1.0;
  looks.spread = 1.0;
  looks.cameras = 1;
  looks.seed = spec.seed ^ 0x5eedf00dULL;
  sc.appearance = gen_synthetic(looks).samples;
  for (std::size_t p = 0; p < spec.people; ++p) {
    auto row = normalized({sc.appearance.row(p).begin(), sc.appearance.row(p).end()});
    std::copy(row.begin(), row.end(), sc.appearance.row(p).begin());
  }

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_real_distribution<double> first(0.0, 0.5 * spec.duration);
  std::uniform_real_distribution<double> stay(spec.min_stay, spec.max_stay);
  std::uniform_real_distribution<double> gap(spec.min_gap, spec.max_gap);
  std::uniform_int_distribution<int> cam(0, spec.cameras - 1);

  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> queue;
  for (std::size_t p = 0; p < spec.people; ++p)
    queue.push({first(rng), 1, static_cast<int>(p)});
  std::multiset<double> exits;
  std::size_t present = 0;
  while (!queue.empty()) {
    const Pending ev = queue.top();
    queue.pop();
    if (ev.order == 0) {
      exits.erase(exits.find(ev.time));
      --present;
      sc.events.push_back({ev.time, ev.person, EventKind::Exit, cam(rng)});
      const double back = ev.time + gap(rng);
      if (u01(rng) < spec.reentry_rate && back + spec.min_stay < spec.duration)
        queue.push({back, 1, ev.person});
      continue;
    }
    if (present >= spec.max_concurrent) {
      // Full room: wait for the next person to leave.
      queue.push({*exits.begin(), 1, ev.person});
      continue;
    }
    ++present;
    sc.events.push_back({ev.time, ev.person, EventKind::Enter, cam(rng)});
    const double leave =
        std::min(ev.time + stay(rng), std::max(spec.duration, ev.time + spec.min_stay));
    exits.insert(leave);
    queue.push({leave, 0, ev.person});
  }
  return sc;
}

std::size_t max_concurrent(const std::vector<Event>& events) {
  std::size_t now = 0, peak = 0;
  for (const auto& e : events) {
    if (e.kind == EventKind::Enter)
      peak = std::max(peak, ++now);
    else if (now > 0)
      --now;
  }
  return peak;
}

std::vector<std::string> validate_events(const std::vector<Event>& events) {
  std::vector<std::string> problems;
  std::map<int, bool> inside;
  double last = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    const std::string at = "event " + std::to_string(i) + " (person " +
                           std::to_string(e.person) + ")";
    if (e.time < last) problems.push_back(at + ": time goes backwards");
    last = e.time;
    bool& in = inside[e.person];
    if ((e.kind == EventKind::Enter) == in)
      problems.push_back(at + ": " + std::string(to_string(e.kind)) + " while " +
                         (in ? "inside" : "outside"));
    in = e.kind == EventKind::Enter;
  }
  for (const auto& [person, in] : inside)
    if (in) problems.push_back("person " + std::to_string(person) + " never exits");
  return problems;
}

void write_events(const std::vector<Event>& events, std::ostream& out) {
  out << "time,person,kind,camera\n";
  char buf[64];
  for (const auto& e : events) {
    std::snprintf(buf, sizeof buf, "%.17g", e.time);
    out << buf << ',' << e.person << ',' << to_string(e.kind) << ',' << e.camera << '\n';
  }
}

std::vector<Event> read_events(std::istream& in) {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line) || line != "time,person,kind,camera")
    throw FormatError("expected header 'time,person,kind,camera'", lineno);
  std::vector<Event> events;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 4)
      throw FormatError("expected 4 fields, found " + std::to_string(cells.size()), lineno);
    Event e;
    try {
      std::size_t used = 0;
      e.time = std::stod(cells[0], &used);
      if (used != cells[0].size()) throw std::invalid_argument("time");
      e.person = std::stoi(cells[1]);
      e.camera = std::stoi(cells[3]);
    } catch (const std::exception&) {
      throw FormatError("malformed number", lineno);
    }
    if (cells[2] == "enter")
      e.kind = EventKind::Enter;
    else if (cells[2] == "exit")
      e.kind = EventKind::Exit;
    else
      throw FormatError("unknown event kind '" + cells[2] + "'", lineno);
    events.push_back(e);
  }
  return events;
}

Embedder noisy_embedder(const Matrix& appearance, double sigma) {
  return [&appearance, sigma](int person, std::mt19937_64& rng) {
    const auto base = appearance.row(static_cast<std::size_t>(person));
    std::vector<double> v(base.begin(), base.end());
    if (sigma > 0.0) {
      std::normal_distribution<double> z(0.0, 1.0);
      const double s = sigma / std::sqrt(static_cast<double>(v.size()));
      for (double& x : v) x += s * z(rng);
    }
    return normalized(std::move(v));
  };
}

TrackAssignment run_gate(const Scenario& scenario, const Embedder& embedder,
                         const GateOptions& options) {
  if (options.tau < 0.0) throw std::invalid_argument("run_gate: tau must be >= 0");
  if (options.gallery_cap == 0) throw std::invalid_argument("run_gate: gallery_cap must be >= 1");

  struct Track {
    std::deque<std::vector<double>> gallery;
    bool active = false;
    int owner = -1;  // person of the most recent visit
  };
  struct Presence {
    int track = -1;
    int last_track = -1;
    int visits = 0;
    double entered = 0.0;
  };

  std::mt19937_64 rng(options.seed);
  std::vector<Track> tracks;
  std::map<int, Presence> people;
  TrackAssignment out;
  const double fps = scenario.spec.fps;

  for (const auto& e : scenario.events) {
    Presence& p = people[e.person];
    if (e.kind == EventKind::Enter) {
      const auto query = embedder(e.person, rng);
      int chosen = -1;
      if (options.tau > 0.0) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < tracks.size(); ++t) {
          if (tracks[t].active || tracks[t].gallery.empty()) continue;
          double d2 = 0.0;
          for (std::size_t d = 0; d < query.size(); ++d) {
            double mean = 0.0;
            for (const auto& g : tracks[t].gallery) mean += g[d];
            mean /= static_cast<double>(tracks[t].gallery.size());
            d2 += (query[d] - mean) * (query[d] - mean);
          }
          const double dist = std::sqrt(d2);
          if (dist < best) {
            best = dist;
            chosen = static_cast<int>(t);
          }
        }
        if (best > options.tau) chosen = -1;
      }
      if (chosen < 0) {
        chosen = static_cast<int>(tracks.size());
        tracks.emplace_back();
        ++out.tracks_opened;
      } else if (tracks[chosen].owner != e.person) {
        ++out.false_matches;
      }
      if (p.visits > 0) {
        if (chosen == p.last_track)
          ++out.reid_hits;
        else
          ++out.reid_misses;
      }
      tracks[chosen].active = true;
      tracks[chosen].owner = e.person;
      p.track = chosen;
      p.entered = e.time;
      out.entry_track.push_back(chosen);
    } else {
      if (p.track < 0)
        throw std::invalid_argument("run_gate: exit without entry for person " +
                                    std::to_string(e.person));
      const auto first = static_cast<std::size_t>(std::ceil(p.entered * fps));
      std::size_t frames = 0;
      for (std::size_t f = first; static_cast<double>(f) / fps < e.time; ++f, ++frames)
        out.observations.push_back({f, e.person, p.track, p.visits});
      Track& t = tracks[p.track];
      for (std::size_t k = 0; k < std::min(frames, options.gallery_cap); ++k)
        t.gallery.push_back(embedder(e.person, rng));
      while (t.gallery.size() > options.gallery_cap) t.gallery.pop_front();
      t.active = false;
      p.last_track = p.track;
      p.track = -1;
      ++p.visits;
    }
  }
  std::stable_sort(out.observations.begin(), out.observations.end(),
                   [](const Observation& a, const Observation& b) {
                     return a.frame != b.frame ? a.frame < b.frame : a.gt < b.gt;
                   });
  return out;
}

std::vector<Observation> corrupt(std::vector<Observation> obs, const CorruptionOptions& o) {
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  int next_track = 0;
  std::size_t last_frame = 0;
  for (const auto& x : obs) {
    next_track = std::max(next_track, x.track + 1);
    last_frame = std::max(last_frame, x.frame);
  }

  if (o.switch_rate > 0.0) {
    std::map<std::pair<int, int>, std::vector<std::size_t>> visits;
    for (std::size_t i = 0; i < obs.size(); ++i)
      if (obs[i].gt >= 0) visits[{obs[i].gt, obs[i].visit}].push_back(i);
    for (auto& [key, rows] : visits) {
      if (rows.size() < 2 || u01(rng) >= o.switch_rate) continue;
      std::sort(rows.begin(), rows.end(),
                [&](std::size_t a, std::size_t b) { return obs[a].frame < obs[b].frame; });
      std::uniform_int_distribution<std::size_t> at(1, rows.size() - 1);
      const int fresh = next_track++;
      for (std::size_t k = at(rng); k < rows.size(); ++k) obs[rows[k]].track = fresh;
    }
  }
  if (o.miss_rate > 0.0)
    for (auto& x : obs)
      if (x.gt >= 0 && u01(rng) < o.miss_rate) x.track = -1;
  if (o.fp_rate > 0.0 && !obs.empty()) {
    std::poisson_distribution<int> count(o.fp_rate);
    for (std::size_t f = 0; f <= last_frame; ++f)
      for (int k = count(rng); k > 0; --k) obs.push_back({f, -1, next_track++, 0});
  }
  return obs;
}

double MotaParts::value() const {
  return 1.0 - static_cast<double>(misses + false_positives + id_switches) /
                   static_cast<double>(gt);
}

MotaParts mota_parts(const std::vector<Observation>& obs) {
  MotaParts parts;
  std::vector<const Observation*> matched;
  for (const auto& x : obs) {
    if (x.gt >= 0) {
      ++parts.gt;
      if (x.track < 0)
        ++parts.misses;
      else
        matched.push_back(&x);
    } else if (x.track >= 0) {
      ++parts.false_positives;
    }
  }
  if (parts.gt == 0) throw std::invalid_argument("mota: empty ground truth");
  std::stable_sort(matched.begin(), matched.end(), [](const Observation* a, const Observation* b) {
    return a->gt != b->gt ? a->gt < b->gt : a->frame < b->frame;
  });
  for (std::size_t i = 1; i < matched.size(); ++i) {
    const auto& prev = *matched[i - 1];
    const auto& cur = *matched[i];
    if (prev.gt == cur.gt && prev.visit == cur.visit && prev.track != cur.track)
      ++parts.id_switches;
  }
  return parts;
}

double mota(const std::vector<Observation>& obs) { return mota_parts(obs).value(); }

double idf1(const std::vector<Observation>& obs) {
  std::map<int, std::size_t> gt_index, track_index;
  std::size_t gt_total = 0, pred_total = 0;
  for (const auto& x : obs) {
    if (x.gt >= 0) {
      ++gt_total;
      gt_index.emplace(x.gt, gt_index.size());
    }
    if (x.track >= 0) {
      ++pred_total;
      track_index.emplace(x.track, track_index.size());
    }
  }
  if (gt_total == 0) throw std::invalid_argument("idf1: empty ground truth");
  Matrix overlap(gt_index.size(), track_index.size());
  for (const auto& x : obs)
    if (x.gt >= 0 && x.track >= 0) overlap(gt_index[x.gt], track_index[x.track]) += 1.0;
  const auto match = max_weight_matching(overlap);
  double idtp = 0.0;
  for (std::size_t r = 0; r < match.size(); ++r)
    if (match[r] >= 0) idtp += overlap(r, static_cast<std::size_t>(match[r]));
  const double idfn = static_cast<double>(gt_total) - idtp;
  const double idfp = static_cast<double>(pred_total) - idtp;
  return 2.0 * idtp / (2.0 * idtp + idfp + idfn);
}

std::vector<int> max_weight_matching(const Matrix& w) {
  const std::size_t n = std::max(w.rows, w.cols);
  std::vector<int> result(w.rows, -1);
  if (n == 0) return result;
  double top = 0.0;
  for (double v : w.data) top = std::max(top, v);
  // Square min-cost problem on top - w, zero-weight padding.
  auto cost = [&](std::size_t i, std::size_t j) {
    const double v = (i < w.rows && j < w.cols) ? w(i, j) : 0.0;
    return top - v;
  };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  for (std::size_t j = 1; j <= n; ++j)
    if (p[j] != 0 && p[j] - 1 < w.rows && j - 1 < w.cols)
      result[p[j] - 1] = static_cast<int>(j - 1);
  return result;
}

}  // namespace reidlab::track
