#include "reidlab/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace reidlab {

double WarmupSchedule::lr(int epoch) const {
  if (epoch < 1 || epoch > total_epochs)
    throw std::out_of_range("warmup_lr: epoch " + std::to_string(epoch) +
                            " outside [1, " + std::to_string(total_epochs) + "]");
  if (epoch <= ramp_end) return peak * epoch / ramp_end;
  if (epoch <= first_drop) return peak;
  if (epoch <= second_drop) return peak / 10;
  return peak / 100;
}

WarmupSchedule WarmupSchedule::rescaled(int total_epochs) {
  if (total_epochs < 1)
    throw std::invalid_argument("warmup: total epochs must be >= 1");
  WarmupSchedule s;
  const double scale = total_epochs / 350.0;
  auto boundary = [&](int b) {
    return std::clamp(static_cast<int>(std::lround(b * scale)), 1, total_epochs);
  };
  s.total_epochs = total_epochs;
  s.ramp_end = boundary(10);
  s.first_drop = std::max(boundary(150), s.ramp_end);
  s.second_drop = std::max(boundary(225), s.first_drop);
  return s;
}

double warmup_lr(int epoch) {
  // Plateaus are literal constants so the reference values are exact.
  if (epoch < 1 || epoch > 350)
    throw std::out_of_range("warmup_lr: epoch " + std::to_string(epoch) +
                            " outside [1, 350]");
  if (epoch <= 10) return 3e-2 * epoch / 10;
  if (epoch <= 150) return 3e-2;
  if (epoch <= 225) return 3e-3;
  return 3e-4;
}

double CyclicSchedule::peak(int cycle) const {
  return base_lr * std::pow(decay, cycle);
}

double cyclic_lr(int epoch, const CyclicSchedule& s) {
  if (s.cycle_length < 1 || s.cycles < 1)
    throw std::invalid_argument("cyclic_lr: cycle length and count must be >= 1");
  if (epoch < 0 || epoch >= s.total_epochs())
    throw std::out_of_range("cyclic_lr: epoch " + std::to_string(epoch) +
                            " outside [0, " + std::to_string(s.total_epochs()) +
                            ")");
  const int k = epoch / s.cycle_length;
  const double tau =
      static_cast<double>(epoch % s.cycle_length) / s.cycle_length;
  return s.min_lr +
         (s.peak(k) - s.min_lr) * (1.0 + std::cos(std::numbers::pi * tau)) / 2.0;
}

bool is_snapshot_epoch(int epoch, const CyclicSchedule& s) {
  return epoch >= 0 && epoch % s.cycle_length == s.cycle_length - 1;
}

}  // namespace reidlab
