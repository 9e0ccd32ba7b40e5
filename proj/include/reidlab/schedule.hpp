#pragma once

#include <cstddef>

namespace reidlab {

// Step warmup: linear ramp to the peak over the first epochs, then two
// tenfold drops. Epochs are 1-based. The defaults are the 350-epoch regime;
// rescaled() keeps the same shape for shorter runs.
struct WarmupSchedule {
  int total_epochs = 350;
  int ramp_end = 10;
  int first_drop = 150;   // last epoch at peak
  int second_drop = 225;  // last epoch at peak / 10
  double peak = 3e-2;

  double lr(int epoch) const;

  static WarmupSchedule rescaled(int total_epochs);
};

// The reference schedule; throws std::out_of_range outside [1, 350].
double warmup_lr(int epoch);

// Cosine annealing restarted every cycle, with the peak decayed per cycle:
//   lr(e) = min + (base * decay^k - min) * (1 + cos(pi * tau)) / 2
// with k = e / cycle_length and tau = (e mod cycle_length) / cycle_length.
struct CyclicSchedule {
  double base_lr = 3e-4;
  int cycle_length = 35;
  int cycles = 15;
  double decay = 0.7;
  double min_lr = 0.0;

  int total_epochs() const { return cycle_length * cycles; }
  double peak(int cycle) const;
};

// e is 0-based within the cyclic phase.
double cyclic_lr(int epoch, const CyclicSchedule& schedule);

// True on the last epoch of every cycle.
bool is_snapshot_epoch(int epoch, const CyclicSchedule& schedule);

}  // namespace reidlab
