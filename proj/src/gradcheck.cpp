// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "affectfuse/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "affectfuse/error.hpp"

namespace affectfuse {

GradCheckReport finite_diff_check(const std::function<double()>& f,
                                  std::span<GradCheckBlock> blocks, double h, double tol) {
  if (h <= 0.0) throw ContractError("finite_diff_check: h must be positive");
  const double f0 = f();
  const double f1 = f();
  if (!(f0 == f1))
    throw ContractError("finite_diff_check: f is not deterministic (" + std::to_string(f0) +
                        " vs " + std::to_string(f1) + ")");
  if (!std::isfinite(f0)) throw ContractError("finite_diff_check: f is not finite");

  GradCheckReport report;
  report.tol = tol;
  for (const GradCheckBlock& b : blocks) {
    if (b.tensor == nullptr) throw ContractError("finite_diff_check: null tensor in block " + b.name);
    if (b.analytic.size() != b.tensor->data.size())
      throw ContractError("finite_diff_check: analytic size mismatch in block " + b.name);
    GradCheckReport::Row row;
    row.name = b.name;
    for (size_t i = 0; i < b.tensor->data.size(); ++i) {
      double& x = b.tensor->data[i];
      const double saved = x;
      x = saved + h;
      const double fp = f();
      x = saved - h;
      const double fm = f();
      x = saved;
      const double fd = (fp - fm) / (2.0 * h);
      const double a = b.analytic[i];
      const double rel = std::abs(fd - a) / std::max({std::abs(fd), std::abs(a), 1e-3});
      if (rel > row.max_rel_err) {
        row.max_rel_err = rel;
        row.worst_index = static_cast<int64_t>(i);
        row.analytic = a;
        row.numeric = fd;
      }
    }
    report.max_rel_err = std::max(report.max_rel_err, row.max_rel_err);
    report.rows.push_back(std::move(row));
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

}  // namespace affectfuse
