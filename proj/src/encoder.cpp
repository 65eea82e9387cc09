// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "affectfuse/encoder.hpp"

#include <string>

#include "affectfuse/error.hpp"

namespace affectfuse {

void ModalityStream::check() const {
  if (raw.ndim() != 2) throw DimensionError("stream raw must be [T x D], got " + shape_str(raw.shape));
  if (present.size() != static_cast<size_t>(raw.shape[0]))
    throw ContractError("stream presence length " + std::to_string(present.size()) +
                        " does not match T=" + std::to_string(raw.shape[0]));
  for (int t = 0; t < raw.shape[0]; ++t) {
    if (present[static_cast<size_t>(t)]) continue;
    for (int j = 0; j < raw.shape[1]; ++j)
      if (raw.at(t, j) != 0.0)
        throw ContractError("stream row " + std::to_string(t) + " marked missing but nonzero");
  }
}

ModalityStream apply_missing_mask(const ModalityStream& s, const std::vector<uint8_t>& keep) {
  if (keep.size() != s.present.size())
    throw DimensionError("missing mask length " + std::to_string(keep.size()) +
                         " does not match T=" + std::to_string(s.present.size()));
  ModalityStream out = s;
  const int d = s.dim();
  for (size_t t = 0; t < keep.size(); ++t) {
    if (keep[t]) continue;
    out.present[t] = 0;
    for (int j = 0; j < d; ++j) out.raw.at(static_cast<int>(t), j) = 0.0;
  }
  return out;
}

EncoderParams EncoderParams::init(Rng& rng, int raw_dim, int width, int layers, int num_heads,
                                  int ffn_hidden, int t_max, double ln_eps) {
  EncoderParams p;
  p.projection = LinearParams::init(rng, width, raw_dim);
  p.positional = Tensor::zeros({t_max, width});
  for (auto& v : p.positional.data) v = rng.normal() * 0.02;
  p.positional.requires_grad = true;
  p.blocks.reserve(static_cast<size_t>(layers));
  for (int l = 0; l < layers; ++l)
    p.blocks.push_back(TransformerBlockParams::init(rng, width, num_heads, ffn_hidden, ln_eps));
  return p;
}

Val encode_modality(Tape& tape, Binder& bind, const ModalityStream& s, EncoderParams& p,
                    const ForwardCtx& ctx) {
  s.check();
  const int t = s.steps();
  if (t > p.t_max())
    throw CapacityError("sequence length " + std::to_string(t) + " exceeds positional capacity " +
                        std::to_string(p.t_max()));
  if (s.dim() != p.projection.in_dim())
    throw DimensionError("encoder expects raw dim " + std::to_string(p.projection.in_dim()) +
                         ", got " + std::to_string(s.dim()));
  Val x = tape.constant(s.raw);
  Val h = linear_forward(tape, bind, x, p.projection);
  Val pos = tape.slice_rows(bind(p.positional), 0, t);
  h = tape.add(h, pos);
  for (TransformerBlockParams& block : p.blocks)
    h = transformer_block_forward(tape, bind, h, block, ctx);
  return h;
}

}  // namespace affectfuse
