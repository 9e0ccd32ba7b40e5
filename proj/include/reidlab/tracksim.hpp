#pragma once

// Room-scale tracking simulation: people enter and leave, a ReID gate decides
// on every entry whether to reopen an old track or start a new one, and the
// result is scored with MOTA and IDF1. Detection is assumed perfect unless
// corruption is applied explicitly.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "reidlab/matrix.hpp"

namespace reidlab::track {

enum class EventKind { Enter, Exit };
std::string_view to_string(EventKind k);

struct Event {
  double time = 0.0;
  int person = 0;
  EventKind kind = EventKind::Enter;
  int camera = 0;
  bool operator==(const Event&) const = default;
};

struct ScenarioSpec {
  std::size_t people = 7;
  double duration = 750.0;     // seconds; arrivals happen before this
  double reentry_rate = 0.5;   // probability of coming back after an exit
  double sigma = 0.3;          // per-observation appearance noise
  std::size_t dim = 32;
  std::size_t max_concurrent = 7;
  double min_stay = 40.0, max_stay = 200.0;
  double min_gap = 20.0, max_gap = 120.0;
  double fps = 1.0;
  int cameras = 4;
  std::uint64_t seed = 0;
};

struct Scenario {
  ScenarioSpec spec;
  std::vector<Event> events;  // sorted by time, exits before enters on ties
  Matrix appearance;          // people × dim, unit rows
};

// Throws std::invalid_argument when people < 2 or the ScenarioSpec is inconsistent.
Scenario gen_scenario(const ScenarioSpec& spec);

// Largest number of people present at once.
std::size_t max_concurrent(const std::vector<Event>& events);
// Empty when enter/exit alternate per person starting with enter.
std::vector<std::string> validate_events(const std::vector<Event>& events);

void write_events(const std::vector<Event>& events, std::ostream& out);
std::vector<Event> read_events(std::istream& in);

// Returns an appearance embedding of `person` for one observation.
using Embedder = std::function<std::vector<double>(int person, std::mt19937_64& rng)>;

// normalize(appearance[person] + sigma·z/sqrt(dim)); sigma = 0 is an oracle.
Embedder noisy_embedder(const Matrix& appearance, double sigma);

struct GateOptions {
  double tau = 0.8;  // 0 disables ReID
  std::size_t gallery_cap = 5;
  std::uint64_t seed = 0;
};

// One scored observation. gt < 0 marks a false positive, track < 0 a miss.
// `visit` numbers the continuous presence of a person.
struct Observation {
  std::size_t frame = 0;
  int gt = -1;
  int track = -1;
  int visit = 0;
};

struct TrackAssignment {
  std::vector<int> entry_track;  // per enter event, in event order
  std::vector<Observation> observations;
  std::size_t tracks_opened = 0;
  std::size_t reid_hits = 0;      // re-entries given the person's previous track
  std::size_t reid_misses = 0;    // re-entries given anything else
  std::size_t false_matches = 0;  // entries given another person's track
};

TrackAssignment run_gate(const Scenario& scenario, const Embedder& embedder,
                         const GateOptions& options);

struct CorruptionOptions {
  double miss_rate = 0.0;
  double fp_rate = 0.0;      // false positives per frame
  double switch_rate = 0.0;  // per visit
  std::uint64_t seed = 0;
};

std::vector<Observation> corrupt(std::vector<Observation> observations,
                                 const CorruptionOptions& options);

struct MotaParts {
  std::size_t gt = 0, misses = 0, false_positives = 0, id_switches = 0;
  double value() const;
};

// Switches are counted only between consecutive matched observations of the
// same visit. Both throw on empty ground truth.
MotaParts mota_parts(const std::vector<Observation>& observations);
double mota(const std::vector<Observation>& observations);
double idf1(const std::vector<Observation>& observations);

// Maximum-weight one-to-one matching of rows to columns; result[r] is the
// matched column or -1.
std::vector<int> max_weight_matching(const Matrix& weights);

}  // namespace reidlab::track
