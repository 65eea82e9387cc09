// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <span>
#include <vector>

#include "affectfuse/loss.hpp"
#include "affectfuse/nn.hpp"

namespace affectfuse {

// Temporal feedback head. Per step: z_tilde = feedback([z_t, y_prev]),
// logits = classifier(z_tilde), y_t = softmax(logits). The previous
// prediction enters as a value only; no gradient flows through the feedback
// path across steps.
struct TflParams {
  LinearParams feedback;                 // [width x (width + classes)]
  std::vector<LinearParams> classifier;  // last layer has `classes` rows

  int width() const { return feedback.out_dim(); }
  int classes() const { return classifier.back().out_dim(); }

  // cls_hidden == 0 builds a single linear classifier; otherwise one hidden
  // ReLU layer of that size. scale sets the gaussian std of all weights.
  static TflParams init(Rng& rng, int width, int classes, int cls_hidden, double scale);
  static TflParams init_glorot(Rng& rng, int width, int classes, int cls_hidden);
};

struct TflStepVals {
  Val y;        // [classes]
  Val z_tilde;  // [width]
};

// One feedback step on the tape. y_prev is consumed as a constant.
// ContractError when y_prev is off the simplex.
TflStepVals tfl_step(Tape& tape, Binder& bind, Val z_t, const ProbabilityVector& y_prev,
                     TflParams& p);

// Plain-value twin of tfl_step for iteration and analysis.
ProbabilityVector tfl_step_eval(std::span<const double> z, const ProbabilityVector& y_prev,
                                const TflParams& p);

// Unrolls tfl_step over the rows of z [T x width], feeding each step's
// prediction value into the next. y0 defaults to uniform. frozen_feedback,
// when given, is [T x classes]: row t replaces the y_prev of step t (see
// ForwardCtx::frozen_feedback); shape mismatch is a ContractError.
std::vector<Val> run_sequence(Tape& tape, Binder& bind, Val z, TflParams& p,
                              const ProbabilityVector& y0,
                              const Tensor* frozen_feedback = nullptr);

struct FixedPointResult {
  ProbabilityVector y_star;
  std::vector<ProbabilityVector> trajectory;  // y0, y1, ...
  bool converged = false;
  int iterations = 0;  // applications of the map
};

// Iterates y <- step(z, y) with fixed z until the sup-norm update falls
// below tol or max_iter applications pass.
FixedPointResult iterate_fixed_point(std::span<const double> z, const ProbabilityVector& y0,
                                     const TflParams& p, int max_iter, double tol);

// Upper bound on the Lipschitz constant of y -> step(z, y): spectral norm
// of the y-block columns of the feedback matrix, times each classifier
// layer's spectral norm, times 1/2 for the softmax Jacobian (ReLU factors
// are 1). Below 1 the map is a contraction with a unique fixed point.
double contraction_bound(const TflParams& p);

}  // namespace affectfuse
