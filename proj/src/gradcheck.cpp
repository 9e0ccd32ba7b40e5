#include "reidlab/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace reidlab {

GradCheckReport finite_diff_check(const std::function<Tensor()>& f,
                                  std::vector<Tensor> leaves, double h,
                                  double tol) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_check: h must be > 0");
  GradCheckReport report;
  report.h = h;
  report.tol = tol;
  report.max_rel_error.assign(leaves.size(), 0.0);

  auto fail_non_finite = [&](std::size_t leaf, std::size_t index) {
    report.pass = false;
    report.non_finite_at = Coordinate{leaf, index};
    report.message = "non-finite value at leaf " + std::to_string(leaf) +
                     " coordinate " + std::to_string(index);
    return report;
  };

  for (auto& leaf : leaves) leaf.zero_grad();
  const Tensor root = f();
  if (!std::isfinite(root.item())) return fail_non_finite(0, 0);
  backward(root);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (const auto& leaf : leaves)
    analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());

  for (std::size_t l = 0; l < leaves.size(); ++l) {
    auto values = leaves[l].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double fp = f().item();
      values[i] = saved - h;
      const double fm = f().item();
      values[i] = saved;
      const double a = analytic[l][i];
      if (!std::isfinite(fp) || !std::isfinite(fm) || !std::isfinite(a))
        return fail_non_finite(l, i);
      const double numeric = (fp - fm) / (2.0 * h);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > report.max_rel_error[l]) report.max_rel_error[l] = rel;
      if (!report.worst || rel > report.worst_rel_error) {
        report.worst_rel_error = rel;
        report.worst = Coordinate{l, i};
      }
    }
  }
  for (auto& leaf : leaves) leaf.zero_grad();
  report.pass = report.worst_rel_error <= tol;
  if (!report.pass && report.worst)
    report.message = "max relative error " +
                     std::to_string(report.worst_rel_error) + " at leaf " +
                     std::to_string(report.worst->leaf) + " coordinate " +
                     std::to_string(report.worst->index);
  return report;
}

}  // namespace reidlab
