// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "affectfuse/tensor.hpp"

namespace affectfuse {

// One named parameter block under test: the tensor is perturbed in place
// (and restored) while f is re-evaluated; analytic holds the gradient being
// verified, one entry per tensor element.
struct GradCheckBlock {
  std::string name;
  Tensor* tensor = nullptr;
  std::vector<double> analytic;
};

struct GradCheckReport {
  struct Row {
    std::string name;
    double max_rel_err = 0.0;
    int64_t worst_index = -1;
    double analytic = 0.0;
    double numeric = 0.0;
  };
  std::vector<Row> rows;
  double max_rel_err = 0.0;
  double tol = 0.0;
  bool pass = false;
};

// Central finite differences: for every element of every block, compare
// (f(x+h) - f(x-h)) / 2h against the analytic entry. Relative error is
// |fd - analytic| / max(|fd|, |analytic|, 1e-3); the floor keeps noise on
// near-zero gradients from being amplified while still catching wrong rules
// at any material scale. f must be deterministic: it is evaluated twice up
// front and a bitwise mismatch is a ContractError.
GradCheckReport finite_diff_check(const std::function<double()>& f,
                                  std::span<GradCheckBlock> blocks, double h, double tol);

}  // namespace affectfuse
