// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "affectfuse/nn.hpp"

#include <cmath>
#include <string>

#include "affectfuse/error.hpp"

namespace affectfuse {

LinearParams LinearParams::init(Rng& rng, int out, int in) {
  return init_scaled(rng, out, in, std::sqrt(2.0 / (in + out)));
}

LinearParams LinearParams::init_scaled(Rng& rng, int out, int in, double std) {
  LinearParams p;
  p.weight = Tensor::zeros({out, in});
  for (auto& v : p.weight.data) v = rng.normal() * std;
  p.weight.requires_grad = true;
  p.bias = Tensor::zeros({out});
  p.bias.requires_grad = true;
  return p;
}

LinearParams LinearParams::zeros(int out, int in) {
  LinearParams p;
  p.weight = Tensor::zeros({out, in});
  p.weight.requires_grad = true;
  p.bias = Tensor::zeros({out});
  p.bias.requires_grad = true;
  return p;
}

LayerNormParams LayerNormParams::identity(int d) {
  LayerNormParams p;
  p.gamma = Tensor::full({d}, 1.0);
  p.gamma.requires_grad = true;
  p.beta = Tensor::zeros({d});
  p.beta.requires_grad = true;
  return p;
}

TransformerBlockParams TransformerBlockParams::init(Rng& rng, int width, int num_heads,
                                                    int ffn_hidden, double ln_eps) {
  if (num_heads < 1 || width % num_heads != 0)
    throw ConfigError("transformer block: width " + std::to_string(width) +
                      " not divisible by heads " + std::to_string(num_heads));
  TransformerBlockParams p;
  const int hd = width / num_heads;
  p.heads.reserve(static_cast<size_t>(num_heads));
  for (int h = 0; h < num_heads; ++h)
    p.heads.push_back({LinearParams::init(rng, hd, width), LinearParams::init(rng, hd, width),
                       LinearParams::init(rng, hd, width)});
  p.out_proj = LinearParams::init(rng, width, width);
  p.ffn1 = LinearParams::init(rng, ffn_hidden, width);
  p.ffn2 = LinearParams::init(rng, width, ffn_hidden);
  p.ln1 = LayerNormParams::identity(width);
  p.ln2 = LayerNormParams::identity(width);
  p.ln_eps = ln_eps;
  return p;
}

Val linear_forward(Tape& tape, Binder& bind, Val x, LinearParams& p) {
  const auto& xs = tape.shape(x);
  const int in = p.in_dim();
  Val w = bind(p.weight);
  Val b = bind(p.bias);
  if (xs.size() == 1) {
    if (xs[0] != in)
      throw DimensionError("linear: input " + shape_str(xs) + " vs weight " +
                           shape_str(p.weight.shape));
    Val row = tape.reshape(x, {1, in});
    Val y = tape.add(tape.matmul(row, tape.transpose(w)), b);
    return tape.reshape(y, {p.out_dim()});
  }
  if (xs.size() == 2 && xs[1] == in) return tape.add(tape.matmul(x, tape.transpose(w)), b);
  throw DimensionError("linear: input " + shape_str(xs) + " vs weight " +
                       shape_str(p.weight.shape));
}

Val layer_norm_forward(Tape& tape, Binder& bind, Val x, LayerNormParams& p, double eps) {
  return tape.layer_norm(x, bind(p.gamma), bind(p.beta), eps);
}

Val dropout_forward(Tape& tape, Val x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw DomainError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  if (rate == 0.0) return x;
  const auto& shape = tape.shape(x);
  std::vector<double> mask(tape.value(x).size());
  const double keep = 1.0 - rate;
  for (auto& m : mask) m = rng.uniform() < rate ? 0.0 : 1.0 / keep;
  return tape.mul(x, tape.constant(shape, std::move(mask)));
}

Val causal_self_attention(Tape& tape, Binder& bind, Val h, TransformerBlockParams& p,
                          const ForwardCtx& ctx) {
  const auto& hs = tape.shape(h);
  if (hs.size() != 2 || hs[1] != p.width())
    throw DimensionError("attention: input " + shape_str(hs) + " vs width " +
                         std::to_string(p.width()));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(p.head_dim()));
  Val concat{};
  for (AttentionHeadParams& head : p.heads) {
    Val q = linear_forward(tape, bind, h, head.q);
    Val k = linear_forward(tape, bind, h, head.k);
    Val v = linear_forward(tape, bind, h, head.v);
    Val logits = tape.scale(tape.matmul(q, tape.transpose(k)), inv_sqrt);
    Val attn = tape.causal_softmax_rows(logits);
    if (ctx.diag) ctx.diag->attention.push_back(attn);
    if (ctx.use_dropout()) attn = dropout_forward(tape, attn, ctx.dropout, *ctx.rng);
    Val out = tape.matmul(attn, v);
    concat = concat.ok() ? tape.concat_last_axis(concat, out) : out;
  }
  return linear_forward(tape, bind, concat, p.out_proj);
}

Val transformer_block_forward(Tape& tape, Binder& bind, Val h, TransformerBlockParams& p,
                              const ForwardCtx& ctx) {
  Val x1 = layer_norm_forward(tape, bind, h, p.ln1, p.ln_eps);
  Val h2 = tape.add(h, causal_self_attention(tape, bind, x1, p, ctx));
  Val x2 = layer_norm_forward(tape, bind, h2, p.ln2, p.ln_eps);
  Val f = linear_forward(tape, bind, x2, p.ffn1);
  f = tape.relu(f);
  f = linear_forward(tape, bind, f, p.ffn2);
  if (ctx.use_dropout()) f = dropout_forward(tape, f, ctx.dropout, *ctx.rng);
  return tape.add(h2, f);
}

Val mlp_forward(Tape& tape, Binder& bind, Val x, std::span<LinearParams> layers) {
  if (layers.empty()) throw ContractError("mlp_forward: needs at least one layer");
  Val h = x;
  for (size_t i = 0; i < layers.size(); ++i) {
    h = linear_forward(tape, bind, h, layers[i]);
    if (i + 1 < layers.size()) h = tape.relu(h);
  }
  return h;
}

}  // namespace affectfuse
