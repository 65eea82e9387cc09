// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "affectfuse/loss.hpp"

#include <cmath>
#include <string>

#include "affectfuse/error.hpp"

namespace affectfuse {

bool ProbabilityVector::valid(double tol) const {
  if (p.ndim() != 1 || p.shape[0] < 1) return false;
  double sum = 0.0;
  for (double v : p.data) {
    if (!std::isfinite(v) || v < 0.0) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= tol;
}

void ProbabilityVector::require_valid(double tol) const {
  if (!valid(tol)) throw ContractError("probability vector off the simplex");
}

int ProbabilityVector::arg_max() const {
  int best = 0;
  for (int i = 1; i < classes(); ++i)
    if (p.at(i) > p.at(best)) best = i;
  return best;
}

ProbabilityVector ProbabilityVector::uniform(int k) {
  if (k < 1) throw ContractError("uniform distribution needs k >= 1");
  return {Tensor::full({k}, 1.0 / k)};
}

ProbabilityVector ProbabilityVector::from(std::vector<double> values) {
  // Size before move: argument evaluation order is unspecified.
  const int k = static_cast<int>(values.size());
  return {Tensor({k}, std::move(values))};
}

namespace {
void check_label(int label, int k) {
  if (label < 0 || label >= k)
    throw ContractError("label " + std::to_string(label) + " out of range for " +
                        std::to_string(k) + " classes");
}
}  // namespace

double cross_entropy(const ProbabilityVector& y, int label) {
  check_label(label, y.classes());
  return -std::log(y.p.at(label) + kLogEps);
}

double kl_divergence(const ProbabilityVector& p, const ProbabilityVector& q) {
  if (p.classes() != q.classes())
    throw DimensionError("kl: class count mismatch " + std::to_string(p.classes()) + " vs " +
                         std::to_string(q.classes()));
  double s = 0.0;
  for (int i = 0; i < p.classes(); ++i) {
    const double pi = p.p.at(i);
    if (pi == 0.0) continue;  // 0 * log(0/q) = 0
    s += pi * (std::log(pi + kLogEps) - std::log(q.p.at(i) + kLogEps));
  }
  return s;
}

LossBreakdown sequence_loss(std::span<const ProbabilityVector> preds, std::span<const int> labels,
                            double lambda) {
  if (preds.empty()) throw ContractError("sequence_loss: empty prediction sequence");
  if (preds.size() != labels.size())
    throw ContractError("sequence_loss: " + std::to_string(preds.size()) + " predictions vs " +
                        std::to_string(labels.size()) + " labels");
  const double t = static_cast<double>(preds.size());
  LossBreakdown out;
  out.lambda = lambda;
  for (size_t i = 0; i < preds.size(); ++i) {
    out.ce += cross_entropy(preds[i], labels[i]);
    if (i > 0) out.kl += kl_divergence(preds[i - 1], preds[i]);
  }
  out.ce /= t;
  out.kl /= t;
  out.total = out.ce + lambda * out.kl;
  return out;
}

Val cross_entropy_val(Tape& tape, Val probs, int label) {
  const auto& s = tape.shape(probs);
  if (s.size() != 1) throw ContractError("cross_entropy_val: need a 1D distribution");
  check_label(label, s[0]);
  return tape.scale(tape.log(tape.add_scalar(tape.pick(probs, label), kLogEps)), -1.0);
}

Val kl_divergence_val(Tape& tape, Val p, Val q, bool stop_grad_p) {
  if (tape.shape(p) != tape.shape(q))
    throw DimensionError("kl: shape mismatch " + shape_str(tape.shape(p)) + " vs " +
                         shape_str(tape.shape(q)));
  Val pa = stop_grad_p ? tape.constant(tape.value_tensor(p)) : p;
  Val diff = tape.sub(tape.log(tape.add_scalar(pa, kLogEps)), tape.log(tape.add_scalar(q, kLogEps)));
  return tape.sum_all(tape.mul(pa, diff));
}

SequenceLossVals sequence_loss_vals(Tape& tape, std::span<const Val> preds,
                                    std::span<const int> labels, double lambda,
                                    bool stop_grad_prev) {
  if (preds.empty()) throw ContractError("sequence_loss: empty prediction sequence");
  if (preds.size() != labels.size())
    throw ContractError("sequence_loss: " + std::to_string(preds.size()) + " predictions vs " +
                        std::to_string(labels.size()) + " labels");
  const double inv_t = 1.0 / static_cast<double>(preds.size());
  Val ce{};
  Val kl{};
  for (size_t i = 0; i < preds.size(); ++i) {
    Val term = cross_entropy_val(tape, preds[i], labels[i]);
    ce = ce.ok() ? tape.add(ce, term) : term;
    if (i > 0) {
      Val k = kl_divergence_val(tape, preds[i - 1], preds[i], stop_grad_prev);
      kl = kl.ok() ? tape.add(kl, k) : k;
    }
  }
  SequenceLossVals out;
  out.ce = tape.scale(ce, inv_t);
  // A single step has no consecutive pair, so the smoothing term is zero.
  out.kl = kl.ok() ? tape.scale(kl, inv_t) : tape.constant({1}, {0.0});
  out.total = tape.add(out.ce, tape.scale(out.kl, lambda));
  return out;
}

}  // namespace affectfuse
