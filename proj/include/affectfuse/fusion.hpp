// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <array>

#include "affectfuse/encoder.hpp"

namespace affectfuse {

// Floor added to raw confidence scores before normalization so weights stay
// strictly positive even when every score saturates at zero.
inline constexpr double kMieEps = 1e-8;

// One ordered modality pair (i attends to j): query from h^i, key/value
// from h^j. Queries and keys project to dk; values keep the model width.
struct CmaaPairParams {
  LinearParams query, key, value;
  static CmaaPairParams init(Rng& rng, int width, int dk);
};

// All six ordered pairs of distinct modalities.
struct CmaaParams {
  std::array<CmaaPairParams, 6> pairs;

  static int pair_index(Modality i, Modality j);
  CmaaPairParams& pair(Modality i, Modality j) { return pairs[static_cast<size_t>(pair_index(i, j))]; }

  static CmaaParams init(Rng& rng, int width, int dk);
};

// Confidence scorer: a 2-layer MLP from [h, g] to one logit per step,
// squashed by sigmoid and normalized across modalities. Either one MLP
// shared by all modalities or one per modality.
struct MieParams {
  bool shared = true;
  std::vector<std::vector<LinearParams>> mlps;  // 1 or 3 entries, each 2 layers

  std::vector<LinearParams>& mlp_for(Modality m) {
    return shared ? mlps[0] : mlps[static_cast<size_t>(modality_index(m))];
  }

  static MieParams init(Rng& rng, int width, int hidden, bool shared);
};

// Per-step modality weights: w is [T x 3], rows on the simplex.
struct ConfidenceWeights {
  Tensor w;
  int steps() const { return w.shape[0]; }
  // Entries in [0, 1] and rows summing to 1 within tol.
  bool valid(double tol = 1e-9) const;
};

// Single-head cross-attention with causal prefix masking: step t of the
// output attends over steps 1..t of modality j. Returns [T x width].
Val cmaa_pairwise(Tape& tape, Binder& bind, Val h_i, Val h_j, CmaaPairParams& p,
                  const ForwardCtx& ctx);

// g^i = (g_ij + g_ik) / 2.
Val cmaa_aggregate(Tape& tape, Val g_ij, Val g_ik);

struct MieWeightVals {
  std::array<Val, 3> w;  // each [T]
};

// Normalizes three per-step score columns into weights. Exposed separately
// from mie_weights so the algebra is testable on bare scores: with the
// sigmoid path, w_i = (s_i + eps) / sum_k (s_k + eps).
MieWeightVals mie_normalize(Tape& tape, const std::array<Val, 3>& scores, bool softmax_norm);

MieWeightVals mie_weights(Tape& tape, Binder& bind, const std::array<Val, 3>& h,
                          const std::array<Val, 3>& g, MieParams& p, bool softmax_norm,
                          const ForwardCtx& ctx);

// z = sum_i w^i g^i, rows of g scaled by their step's weight.
Val fuse(Tape& tape, const std::array<Val, 3>& g, const MieWeightVals& w);

// Materializes weight columns into a [T x 3] tensor for traces and checks.
ConfidenceWeights gather_confidence(const Tape& tape, const MieWeightVals& w);

}  // namespace affectfuse
