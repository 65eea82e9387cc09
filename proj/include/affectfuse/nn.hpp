// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <array>
#include <span>
#include <vector>

#include "affectfuse/rng.hpp"
#include "affectfuse/tape.hpp"

namespace affectfuse {

// y = W x + b with W [out x in], b [out]. Applied row-wise to 2D inputs.
struct LinearParams {
  Tensor weight;
  Tensor bias;

  int out_dim() const { return weight.shape[0]; }
  int in_dim() const { return weight.shape[1]; }

  // Glorot-normal weights, zero bias.
  static LinearParams init(Rng& rng, int out, int in);
  // Plain gaussian weights with the given std; zero bias.
  static LinearParams init_scaled(Rng& rng, int out, int in, double std);
  static LinearParams zeros(int out, int in);
};

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;
  static LayerNormParams identity(int d);
};

struct AttentionHeadParams {
  LinearParams q, k, v;  // each [head_dim x width]
};

// Pre-norm residual block: x + Attn(LN(x)) followed by x + FFN(LN(x)).
// Attention is causal multi-head self-attention; dropout hits the attention
// probabilities and the FFN output.
struct TransformerBlockParams {
  std::vector<AttentionHeadParams> heads;
  LinearParams out_proj;       // [width x width]
  LinearParams ffn1;           // [ffn_hidden x width]
  LinearParams ffn2;           // [width x ffn_hidden]
  LayerNormParams ln1, ln2;
  double ln_eps = 1e-5;

  int width() const { return out_proj.out_dim(); }
  int head_dim() const { return heads.empty() ? 0 : heads[0].q.out_dim(); }

  static TransformerBlockParams init(Rng& rng, int width, int num_heads, int ffn_hidden,
                                     double ln_eps);
};

// Optional per-forward collection of intermediate probability tensors, for
// invariant checks and confidence traces.
struct Diagnostics {
  std::vector<Val> attention;              // attention probability matrices
  std::vector<std::array<Val, 3>> mie;     // per-forward confidence weight columns [T]
};

// Shared knobs threaded through every forward builder. rng drives dropout
// masks and must be non-null when train && dropout > 0.
struct ForwardCtx {
  bool train = false;
  double dropout = 0.0;
  Rng* rng = nullptr;
  Diagnostics* diag = nullptr;
  // Optional [T x classes] override of the feedback inputs: row t replaces
  // the recurrent y_prev at step t. The feedback input is a constant by
  // contract, so the finite-difference probe freezes these rows at their
  // base-point values to differentiate the same function the tape does.
  const Tensor* frozen_feedback = nullptr;

  bool use_dropout() const { return train && dropout > 0.0; }
};

Val linear_forward(Tape& tape, Binder& bind, Val x, LinearParams& p);

Val layer_norm_forward(Tape& tape, Binder& bind, Val x, LayerNormParams& p, double eps);

// Inverted dropout: zeroes each element with probability rate and scales
// survivors by 1/(1-rate). The mask is a constant on the tape, so gradients
// flow only through kept elements.
Val dropout_forward(Tape& tape, Val x, double rate, Rng& rng);

// Causal multi-head self-attention over H [T x width].
Val causal_self_attention(Tape& tape, Binder& bind, Val h, TransformerBlockParams& p,
                          const ForwardCtx& ctx);

Val transformer_block_forward(Tape& tape, Binder& bind, Val h, TransformerBlockParams& p,
                              const ForwardCtx& ctx);

// Linear chain with ReLU between layers and no activation after the last;
// a single layer is exactly linear_forward.
Val mlp_forward(Tape& tape, Binder& bind, Val x, std::span<LinearParams> layers);

}  // namespace affectfuse
