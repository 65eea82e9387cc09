// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "affectfuse/tensor.hpp"

namespace affectfuse {

// Largest singular value by power iteration on W^T W, run to a relative
// tolerance on the estimate. Deterministic: the start vector comes from a
// fixed seed. Throws NumericalError when max_iter is exhausted without
// convergence.
double spectral_norm(const Tensor& w, double rel_tol = 1e-6, int max_iter = 10000);

// Spectral norm of the column block [c0, c1) of a 2D tensor.
double spectral_norm_cols(const Tensor& w, int c0, int c1, double rel_tol = 1e-6,
                          int max_iter = 10000);

}  // namespace affectfuse
