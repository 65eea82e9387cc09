// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "affectfuse/tfl.hpp"

#include <algorithm>
#include <cmath>

#include "affectfuse/error.hpp"
#include "affectfuse/linalg.hpp"

namespace affectfuse {

TflParams TflParams::init(Rng& rng, int width, int classes, int cls_hidden, double scale) {
  TflParams p;
  p.feedback = LinearParams::init_scaled(rng, width, width + classes, scale);
  if (cls_hidden > 0) {
    p.classifier.push_back(LinearParams::init_scaled(rng, cls_hidden, width, scale));
    p.classifier.push_back(LinearParams::init_scaled(rng, classes, cls_hidden, scale));
  } else {
    p.classifier.push_back(LinearParams::init_scaled(rng, classes, width, scale));
  }
  return p;
}

TflParams TflParams::init_glorot(Rng& rng, int width, int classes, int cls_hidden) {
  TflParams p;
  p.feedback = LinearParams::init(rng, width, width + classes);
  if (cls_hidden > 0) {
    p.classifier.push_back(LinearParams::init(rng, cls_hidden, width));
    p.classifier.push_back(LinearParams::init(rng, classes, cls_hidden));
  } else {
    p.classifier.push_back(LinearParams::init(rng, classes, width));
  }
  return p;
}

TflStepVals tfl_step(Tape& tape, Binder& bind, Val z_t, const ProbabilityVector& y_prev,
                     TflParams& p) {
  y_prev.require_valid();
  if (y_prev.classes() != p.classes())
    throw DimensionError("tfl_step: y_prev has " + std::to_string(y_prev.classes()) +
                         " classes, head expects " + std::to_string(p.classes()));
  const auto& zs = tape.shape(z_t);
  if (zs.size() != 1 || zs[0] != p.width())
    throw DimensionError("tfl_step: z_t " + shape_str(zs) + " vs width " +
                         std::to_string(p.width()));
  Val yc = tape.constant(y_prev.p);
  Val in = tape.concat_last_axis(z_t, yc);
  Val z_tilde = linear_forward(tape, bind, in, p.feedback);
  Val logits = mlp_forward(tape, bind, z_tilde, std::span<LinearParams>(p.classifier));
  return {tape.softmax_rows(logits), z_tilde};
}

ProbabilityVector tfl_step_eval(std::span<const double> z, const ProbabilityVector& y_prev,
                                const TflParams& p) {
  y_prev.require_valid();
  if (static_cast<int>(z.size()) != p.width())
    throw DimensionError("tfl_step_eval: z size " + std::to_string(z.size()) + " vs width " +
                         std::to_string(p.width()));
  // feedback([z, y])
  const int d = p.width(), k = p.classes();
  std::vector<double> cur(static_cast<size_t>(d));
  for (int i = 0; i < d; ++i) {
    double s = p.feedback.bias.at(i);
    for (int j = 0; j < d; ++j) s += p.feedback.weight.at(i, j) * z[static_cast<size_t>(j)];
    for (int j = 0; j < k; ++j) s += p.feedback.weight.at(i, d + j) * y_prev.p.at(j);
    cur[static_cast<size_t>(i)] = s;
  }
  // classifier chain, ReLU between layers
  for (size_t l = 0; l < p.classifier.size(); ++l) {
    const LinearParams& lin = p.classifier[l];
    std::vector<double> next(static_cast<size_t>(lin.out_dim()));
    for (int i = 0; i < lin.out_dim(); ++i) {
      double s = lin.bias.at(i);
      for (int j = 0; j < lin.in_dim(); ++j) s += lin.weight.at(i, j) * cur[static_cast<size_t>(j)];
      next[static_cast<size_t>(i)] = s;
    }
    if (l + 1 < p.classifier.size())
      for (auto& v : next) v = v > 0.0 ? v : 0.0;
    cur = std::move(next);
  }
  // softmax
  double mx = cur[0];
  for (double v : cur) mx = std::max(mx, v);
  double sum = 0.0;
  for (auto& v : cur) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : cur) v /= sum;
  return ProbabilityVector::from(std::move(cur));
}

std::vector<Val> run_sequence(Tape& tape, Binder& bind, Val z, TflParams& p,
                              const ProbabilityVector& y0, const Tensor* frozen_feedback) {
  const auto& zs = tape.shape(z);
  if (zs.size() != 2 || zs[1] != p.width())
    throw DimensionError("run_sequence: z " + shape_str(zs) + " vs width " +
                         std::to_string(p.width()));
  if (frozen_feedback &&
      (frozen_feedback->shape != std::vector<int>{zs[0], p.classes()}))
    throw ContractError("run_sequence: frozen_feedback must be [T x classes]");
  std::vector<Val> out;
  out.reserve(static_cast<size_t>(zs[0]));
  ProbabilityVector prev = y0;
  for (int t = 0; t < zs[0]; ++t) {
    if (frozen_feedback) {
      std::vector<double> row(static_cast<size_t>(p.classes()));
      for (int c = 0; c < p.classes(); ++c) row[static_cast<size_t>(c)] = frozen_feedback->at(t, c);
      prev = ProbabilityVector::from(std::move(row));
    }
    TflStepVals step = tfl_step(tape, bind, tape.take_row(z, t), prev, p);
    out.push_back(step.y);
    prev = ProbabilityVector{tape.value_tensor(step.y)};
  }
  return out;
}

FixedPointResult iterate_fixed_point(std::span<const double> z, const ProbabilityVector& y0,
                                     const TflParams& p, int max_iter, double tol) {
  if (max_iter < 1) throw ContractError("iterate_fixed_point: max_iter must be >= 1");
  FixedPointResult res;
  res.trajectory.push_back(y0);
  ProbabilityVector cur = y0;
  for (int it = 1; it <= max_iter; ++it) {
    ProbabilityVector next = tfl_step_eval(z, cur, p);
    res.trajectory.push_back(next);
    res.iterations = it;
    double diff = 0.0;
    for (int i = 0; i < next.classes(); ++i)
      diff = std::max(diff, std::abs(next.p.at(i) - cur.p.at(i)));
    cur = next;
    if (diff < tol) {
      res.converged = true;
      break;
    }
  }
  res.y_star = cur;
  return res;
}

double contraction_bound(const TflParams& p) {
  const int d = p.width(), k = p.classes();
  double bound = spectral_norm_cols(p.feedback.weight, d, d + k);
  for (const LinearParams& lin : p.classifier) bound *= spectral_norm(lin.weight);
  return bound * 0.5;
}

}  // namespace affectfuse
