#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "reidlab/tensor.hpp"

namespace reidlab {

struct Coordinate {
  std::size_t leaf = 0;
  std::size_t index = 0;
};

struct GradCheckReport {
  std::vector<double> max_rel_error;  // one entry per leaf
  double worst_rel_error = 0.0;
  std::optional<Coordinate> worst;
  bool pass = false;
  double h = 0.0;
  double tol = 0.0;
  // Set when f produced a non-finite value.
  std::optional<Coordinate> non_finite_at;
  std::string message;
};

// Compares analytic gradients of f to central differences
// (f(x+h) - f(x-h)) / 2h, coordinate by coordinate. The relative error uses
// max(|analytic|, |numeric|, 1e-8) as denominator. f must rebuild its graph
// from the current leaf values on every call and return a single element.
GradCheckReport finite_diff_check(const std::function<Tensor()>& f,
                                  std::vector<Tensor> leaves, double h = 1e-5,
                                  double tol = 1e-4);

}  // namespace reidlab
