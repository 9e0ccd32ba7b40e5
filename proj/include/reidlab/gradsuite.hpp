#pragma once

// Finite-difference checks over every registered op and every loss built on
// top of them, repeated over several seeds.

#include <cstddef>
#include <string>
#include <vector>

namespace reidlab {

struct GradSuiteOptions {
  std::size_t seeds = 10;
  double h = 1e-5;
  double tol = 1e-4;
  std::string only;  // run a single case by name when non-empty
};

struct GradSuiteEntry {
  std::string name;
  std::size_t seeds = 0;
  double worst_rel_error = 0.0;
  bool pass = false;
  std::string message;  // first failure, if any
};

std::vector<std::string> gradient_suite_names();
std::vector<GradSuiteEntry> run_gradient_suite(const GradSuiteOptions& options = {});

}  // namespace reidlab
