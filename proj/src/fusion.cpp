// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "affectfuse/fusion.hpp"

#include <cmath>
#include <string>

#include "affectfuse/error.hpp"

namespace affectfuse {

CmaaPairParams CmaaPairParams::init(Rng& rng, int width, int dk) {
  return {LinearParams::init(rng, dk, width), LinearParams::init(rng, dk, width),
          LinearParams::init(rng, width, width)};
}

int CmaaParams::pair_index(Modality i, Modality j) {
  const int a = modality_index(i), b = modality_index(j);
  if (a == b) throw ContractError("cmaa pair needs distinct modalities");
  return a * 2 + (b < a ? b : b - 1);
}

CmaaParams CmaaParams::init(Rng& rng, int width, int dk) {
  CmaaParams p;
  // Ordered pairs in index order: (a,v) (a,t) (v,a) (v,t) (t,a) (t,v).
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      if (a == b) continue;
      p.pairs[static_cast<size_t>(pair_index(static_cast<Modality>(a), static_cast<Modality>(b)))] =
          CmaaPairParams::init(rng, width, dk);
    }
  return p;
}

MieParams MieParams::init(Rng& rng, int width, int hidden, bool shared) {
  MieParams p;
  p.shared = shared;
  const int n = shared ? 1 : 3;
  for (int i = 0; i < n; ++i) {
    std::vector<LinearParams> mlp;
    mlp.push_back(LinearParams::init(rng, hidden, 2 * width));
    mlp.push_back(LinearParams::init(rng, 1, hidden));
    p.mlps.push_back(std::move(mlp));
  }
  return p;
}

bool ConfidenceWeights::valid(double tol) const {
  if (w.ndim() != 2 || w.shape[1] != 3) return false;
  for (int t = 0; t < w.shape[0]; ++t) {
    double sum = 0.0;
    for (int i = 0; i < 3; ++i) {
      const double v = w.at(t, i);
      if (v < 0.0 || v > 1.0) return false;
      sum += v;
    }
    if (std::abs(sum - 1.0) > tol) return false;
  }
  return true;
}

Val cmaa_pairwise(Tape& tape, Binder& bind, Val h_i, Val h_j, CmaaPairParams& p,
                  const ForwardCtx& ctx) {
  const auto& si = tape.shape(h_i);
  const auto& sj = tape.shape(h_j);
  if (si.size() != 2 || sj.size() != 2 || si != sj)
    throw DimensionError("cmaa: modality encodings must share shape, got " + shape_str(si) +
                         " vs " + shape_str(sj));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(p.query.out_dim()));
  Val q = linear_forward(tape, bind, h_i, p.query);
  Val k = linear_forward(tape, bind, h_j, p.key);
  Val v = linear_forward(tape, bind, h_j, p.value);
  Val logits = tape.scale(tape.matmul(q, tape.transpose(k)), inv_sqrt);
  Val attn = tape.causal_softmax_rows(logits);
  if (ctx.diag) ctx.diag->attention.push_back(attn);
  if (ctx.use_dropout()) attn = dropout_forward(tape, attn, ctx.dropout, *ctx.rng);
  return tape.matmul(attn, v);
}

Val cmaa_aggregate(Tape& tape, Val g_ij, Val g_ik) {
  if (tape.shape(g_ij) != tape.shape(g_ik))
    throw DimensionError("cmaa_aggregate: shape mismatch " + shape_str(tape.shape(g_ij)) + " vs " +
                         shape_str(tape.shape(g_ik)));
  return tape.scale(tape.add(g_ij, g_ik), 0.5);
}

MieWeightVals mie_normalize(Tape& tape, const std::array<Val, 3>& scores, bool softmax_norm) {
  if (softmax_norm) {
    // Scores are logits here: per-step softmax across the three columns.
    Val m = tape.concat_last_axis(
        tape.concat_last_axis(tape.reshape(scores[0], {tape.shape(scores[0])[0], 1}),
                              tape.reshape(scores[1], {tape.shape(scores[1])[0], 1})),
        tape.reshape(scores[2], {tape.shape(scores[2])[0], 1}));
    Val w = tape.softmax_rows(m);
    return {{tape.take_col(w, 0), tape.take_col(w, 1), tape.take_col(w, 2)}};
  }
  std::array<Val, 3> shifted{tape.add_scalar(scores[0], kMieEps), tape.add_scalar(scores[1], kMieEps),
                             tape.add_scalar(scores[2], kMieEps)};
  Val denom = tape.add(tape.add(shifted[0], shifted[1]), shifted[2]);
  return {{tape.div(shifted[0], denom), tape.div(shifted[1], denom), tape.div(shifted[2], denom)}};
}

MieWeightVals mie_weights(Tape& tape, Binder& bind, const std::array<Val, 3>& h,
                          const std::array<Val, 3>& g, MieParams& p, bool softmax_norm,
                          const ForwardCtx& ctx) {
  (void)ctx;
  std::array<Val, 3> scores;
  for (int m = 0; m < 3; ++m) {
    Val u = tape.concat_last_axis(h[static_cast<size_t>(m)], g[static_cast<size_t>(m)]);
    auto& mlp = p.mlp_for(static_cast<Modality>(m));
    Val logit_col = mlp_forward(tape, bind, u, std::span<LinearParams>(mlp));  // [T x 1]
    Val logit = tape.take_col(logit_col, 0);
    scores[static_cast<size_t>(m)] = softmax_norm ? logit : tape.sigmoid(logit);
  }
  return mie_normalize(tape, scores, softmax_norm);
}

Val fuse(Tape& tape, const std::array<Val, 3>& g, const MieWeightVals& w) {
  Val z{};
  for (int m = 0; m < 3; ++m) {
    Val part = tape.scale_rows(g[static_cast<size_t>(m)], w.w[static_cast<size_t>(m)]);
    z = z.ok() ? tape.add(z, part) : part;
  }
  return z;
}

ConfidenceWeights gather_confidence(const Tape& tape, const MieWeightVals& w) {
  const int t = tape.shape(w.w[0])[0];
  ConfidenceWeights cw;
  cw.w = Tensor::zeros({t, 3});
  for (int m = 0; m < 3; ++m) {
    const auto& col = tape.value(w.w[static_cast<size_t>(m)]);
    for (int i = 0; i < t; ++i) cw.w.at(i, m) = col[static_cast<size_t>(i)];
  }
  return cw;
}

}  // namespace affectfuse
