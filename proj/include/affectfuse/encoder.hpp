// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "affectfuse/nn.hpp"

namespace affectfuse {

enum class Modality { audio = 0, visual = 1, text = 2 };

constexpr std::array<const char*, 3> kModalityNames{"audio", "visual", "text"};

inline int modality_index(Modality m) { return static_cast<int>(m); }

// One modality's raw feature track for a session: raw is [T x D_m] and
// present flags each step. Rows with present == 0 are all-zero; the model
// only ever sees the zero-filled rows, never the flags.
struct ModalityStream {
  Modality modality = Modality::audio;
  Tensor raw;
  std::vector<uint8_t> present;

  int steps() const { return raw.shape.empty() ? 0 : raw.shape[0]; }
  int dim() const { return raw.shape.size() == 2 ? raw.shape[1] : 0; }
  void check() const;  // presence/zero-row consistency, shape sanity
};

// Zeroes the rows where keep is false and clears their presence flags.
// Idempotent; keep.size() must equal the step count.
ModalityStream apply_missing_mask(const ModalityStream& s, const std::vector<uint8_t>& keep);

// Per-modality encoder: learned linear projection of raw features into the
// shared width, learned positional embeddings added, then a causal
// transformer stack. positional is [t_max x width]; sequences longer than
// t_max are a capacity error.
struct EncoderParams {
  LinearParams projection;
  Tensor positional;
  std::vector<TransformerBlockParams> blocks;

  int width() const { return projection.out_dim(); }
  int t_max() const { return positional.shape[0]; }

  static EncoderParams init(Rng& rng, int raw_dim, int width, int layers, int num_heads,
                            int ffn_hidden, int t_max, double ln_eps);
};

// h^m = blocks(projection(raw) + positional[0..T)) as a [T x width] value.
Val encode_modality(Tape& tape, Binder& bind, const ModalityStream& s, EncoderParams& p,
                    const ForwardCtx& ctx);

}  // namespace affectfuse
