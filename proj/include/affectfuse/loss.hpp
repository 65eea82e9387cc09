// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <span>

#include "affectfuse/tape.hpp"

namespace affectfuse {

// Probability floor inside logs so zero entries contribute zero instead of
// NaN: log((p + eps) / (q + eps)) and log(y[label] + eps).
inline constexpr double kLogEps = 1e-12;

// A distribution over classes: nonnegative entries summing to 1 within tol.
struct ProbabilityVector {
  Tensor p;

  int classes() const { return p.shape.empty() ? 0 : p.shape[0]; }
  bool valid(double tol = 1e-9) const;
  void require_valid(double tol = 1e-9) const;  // ContractError when invalid
  int arg_max() const;

  static ProbabilityVector uniform(int k);
  static ProbabilityVector from(std::vector<double> values);
};

// -log(p[label] + eps).
double cross_entropy(const ProbabilityVector& y, int label);

// Forward KL: sum_i p_i log((p_i + eps) / (q_i + eps)).
double kl_divergence(const ProbabilityVector& p, const ProbabilityVector& q);

struct LossBreakdown {
  double total = 0.0;
  double ce = 0.0;   // sum of per-step cross entropies / T
  double kl = 0.0;   // sum of per-step consecutive KL terms / T (zero at t=1)
  double lambda = 0.0;
};

// (1/T) * sum_t [CE(y_t, label_t) + lambda * KL(y_{t-1} || y_t)], the KL
// starting from the second step.
LossBreakdown sequence_loss(std::span<const ProbabilityVector> preds, std::span<const int> labels,
                            double lambda);

// Tape builders mirroring the scalar definitions. Gradients flow through
// both KL arguments unless stop_grad_prev detaches the earlier step.
Val cross_entropy_val(Tape& tape, Val probs, int label);
Val kl_divergence_val(Tape& tape, Val p, Val q, bool stop_grad_p);

struct SequenceLossVals {
  Val total, ce, kl;
};

SequenceLossVals sequence_loss_vals(Tape& tape, std::span<const Val> preds,
                                    std::span<const int> labels, double lambda,
                                    bool stop_grad_prev);

}  // namespace affectfuse
