// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <cmath>
#include <vector>

#include "affectfuse/error.hpp"
#include "affectfuse/gradcheck.hpp"
#include "affectfuse/nn.hpp"
#include "test_support.hpp"

using namespace affectfuse;
using testsup::matmul_ref;
using testsup::random_tensor;

namespace {

// x W^T + b by hand, row-wise over a [rows x in] input.
std::vector<double> linear_ref(const Tensor& x, const Tensor& w, const Tensor& b) {
  const int rows = x.ndim() == 2 ? x.shape[0] : 1;
  const int in = x.shape.back();
  const int out = w.shape[0];
  std::vector<double> y(static_cast<size_t>(rows) * out);
  for (int r = 0; r < rows; ++r)
    for (int o = 0; o < out; ++o) {
      double s = b.data[static_cast<size_t>(o)];
      for (int i = 0; i < in; ++i)
        s += x.data[static_cast<size_t>(r) * in + i] * w.data[static_cast<size_t>(o) * in + i];
      y[static_cast<size_t>(r) * out + o] = s;
    }
  return y;
}

}  // namespace

TEST_CASE("linear_forward identity weights pass input through") {
  LinearParams p = LinearParams::zeros(3, 3);
  for (int i = 0; i < 3; ++i) p.weight.at(i, i) = 1.0;
  Tensor x({2, 3}, {1.0, -2.0, 3.0, 0.5, 0.0, -1.5});
  Tape tape;
  Binder bind(tape);
  Val y = linear_forward(tape, bind, tape.constant(x), p);
  CHECK(tape.value(y) == x.data);
}

TEST_CASE("linear_forward hand sum") {
  LinearParams p = LinearParams::zeros(1, 2);
  p.weight.data = {1.0, 1.0};
  p.bias.data = {1.0};
  Tape tape;
  Binder bind(tape);
  Val y = linear_forward(tape, bind, tape.constant({2}, {2.0, 3.0}), p);
  CHECK(tape.value(y)[0] == 6.0);
}

TEST_CASE("linear_forward matches the hand oracle on random input") {
  Rng rng(11);
  LinearParams p = LinearParams::init(rng, 5, 7);
  Tensor x = random_tensor({4, 7}, rng);
  Tape tape;
  Binder bind(tape);
  Val y = linear_forward(tape, bind, tape.constant(x), p);
  CHECK(testsup::max_abs_diff(tape.value(y), linear_ref(x, p.weight, p.bias)) < 1e-12);
}

TEST_CASE("linear_forward rejects width mismatch") {
  LinearParams p = LinearParams::zeros(2, 3);
  Tape tape;
  Binder bind(tape);
  Val x = tape.constant({2, 4}, std::vector<double>(8, 1.0));
  CHECK_THROWS_AS(linear_forward(tape, bind, x, p), DimensionError);
}

TEST_CASE("layer_norm constant vector collapses to beta") {
  LayerNormParams p = LayerNormParams::identity(4);
  Tape tape;
  Binder bind(tape);
  Val y = layer_norm_forward(tape, bind, tape.constant({4}, {5.0, 5.0, 5.0, 5.0}), p, 1e-5);
  for (double v : tape.value(y)) CHECK(std::abs(v) < 1e-9);
}

TEST_CASE("layer_norm leaves a standardized vector nearly fixed") {
  LayerNormParams p = LayerNormParams::identity(2);
  Tape tape;
  Binder bind(tape);
  Val y = layer_norm_forward(tape, bind, tape.constant({2}, {1.0, -1.0}), p, 1e-12);
  CHECK(tape.value(y)[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(tape.value(y)[1] == doctest::Approx(-1.0).epsilon(1e-6));
}

TEST_CASE("layer_norm output moments match gamma and beta") {
  Rng rng(3);
  const int d = 16;
  Tensor x = random_tensor({d}, rng, 2.0);
  LayerNormParams p = LayerNormParams::identity(d);
  for (auto& g : p.gamma.data) g = 1.7;
  for (auto& b : p.beta.data) b = -0.4;
  Tape tape;
  Binder bind(tape);
  Val y = layer_norm_forward(tape, bind, tape.constant(x), p, 1e-10);
  const auto& v = tape.value(y);
  double mean = 0.0;
  for (double e : v) mean += e;
  mean /= d;
  CHECK(std::abs(mean - (-0.4)) < 1e-10);
  double var = 0.0;
  for (double e : v) var += (e - mean) * (e - mean);
  var /= d;
  CHECK(std::abs(var - 1.7 * 1.7) < 1e-6);
}

TEST_CASE("dropout off is the identity, on scales survivors") {
  Rng rng(5);
  Tape tape;
  Val x = tape.constant({3, 4}, std::vector<double>(12, 2.0));
  // rate 0: untouched.
  CHECK(tape.value(dropout_forward(tape, x, 0.0, rng)) == tape.value(x));
  // rate 0.5: every entry is either 0 or 2 / (1 - 0.5) = 4.
  Val y = dropout_forward(tape, x, 0.5, rng);
  for (double v : tape.value(y)) CHECK((v == 0.0 || v == doctest::Approx(4.0)));
}

namespace {

TransformerBlockParams small_block(uint64_t seed, int width, int heads, int ffn) {
  Rng rng(seed);
  return TransformerBlockParams::init(rng, width, heads, ffn, 1e-5);
}

}  // namespace

TEST_CASE("attention over one step is the single key") {
  TransformerBlockParams p = small_block(7, 8, 2, 16);
  Rng rng(9);
  Tensor h = random_tensor({1, 8}, rng);
  Tape tape;
  Binder bind(tape);
  Diagnostics diag;
  ForwardCtx ctx;
  ctx.diag = &diag;
  causal_self_attention(tape, bind, tape.constant(h), p, ctx);
  REQUIRE(diag.attention.size() == 2);  // one matrix per head
  for (Val a : diag.attention) {
    CHECK(tape.shape(a) == std::vector<int>{1, 1});
    CHECK(tape.value(a)[0] == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("attention rows are causal and stochastic") {
  TransformerBlockParams p = small_block(21, 8, 2, 16);
  Rng rng(22);
  const int t_len = 5;
  Tensor h = random_tensor({t_len, 8}, rng);
  Tape tape;
  Binder bind(tape);
  Diagnostics diag;
  ForwardCtx ctx;
  ctx.diag = &diag;
  causal_self_attention(tape, bind, tape.constant(h), p, ctx);
  for (Val a : diag.attention) {
    const auto& m = tape.value(a);
    for (int t = 0; t < t_len; ++t) {
      double row = 0.0;
      for (int s = 0; s < t_len; ++s) {
        const double w = m[static_cast<size_t>(t) * t_len + s];
        CHECK(w >= 0.0);
        if (s > t) CHECK(w == 0.0);
        row += w;
      }
      CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("zeroed queries give running-mean attention") {
  TransformerBlockParams p = small_block(31, 6, 1, 12);
  for (auto& hp : p.heads) {
    for (auto& v : hp.q.weight.data) v = 0.0;
    for (auto& v : hp.q.bias.data) v = 0.0;
  }
  // Identity value/output paths so the output is the mean of the inputs.
  auto ident = [](LinearParams& lp) {
    for (auto& v : lp.weight.data) v = 0.0;
    for (int i = 0; i < std::min(lp.out_dim(), lp.in_dim()); ++i) lp.weight.at(i, i) = 1.0;
    for (auto& v : lp.bias.data) v = 0.0;
  };
  ident(p.heads[0].v);
  ident(p.out_proj);
  Rng rng(32);
  const int t_len = 4;
  Tensor h = random_tensor({t_len, 6}, rng);
  Tape tape;
  Binder bind(tape);
  ForwardCtx ctx;
  Val out = causal_self_attention(tape, bind, tape.constant(h), p, ctx);
  const auto& o = tape.value(out);
  for (int t = 0; t < t_len; ++t)
    for (int c = 0; c < 6; ++c) {
      double mean = 0.0;
      for (int s = 0; s <= t; ++s) mean += h.at(s, c);
      mean /= t + 1;
      CHECK(o[static_cast<size_t>(t) * 6 + c] == doctest::Approx(mean).epsilon(1e-12));
    }
}

TEST_CASE("future steps cannot reach past outputs") {
  // 100 random (input, params, cut point) draws; positions <= cut must be
  // bit-identical after arbitrary edits after the cut.
  const int t_len = 6, width = 8;
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(1000 + static_cast<uint64_t>(trial));
    TransformerBlockParams p =
        small_block(2000 + static_cast<uint64_t>(trial), width, 2, 16);
    Tensor h = random_tensor({t_len, width}, rng);
    const int cut = rng.uniform_int(t_len - 1);  // in [0, t_len-2]
    Tensor h2 = h;
    for (int t = cut + 1; t < t_len; ++t)
      for (int c = 0; c < width; ++c) h2.at(t, c) += rng.normal() * 10.0;
    ForwardCtx ctx;
    Tape ta;
    Binder ba(ta);
    const auto a = ta.value(transformer_block_forward(ta, ba, ta.constant(h), p, ctx));
    Tape tb;
    Binder bb(tb);
    const auto b = tb.value(transformer_block_forward(tb, bb, tb.constant(h2), p, ctx));
    for (int t = 0; t <= cut; ++t)
      for (int c = 0; c < width; ++c)
        CHECK(a[static_cast<size_t>(t) * width + c] == b[static_cast<size_t>(t) * width + c]);
  }
}

TEST_CASE("zeroed projections make the block an identity") {
  TransformerBlockParams p = small_block(41, 8, 2, 16);
  for (auto& v : p.out_proj.weight.data) v = 0.0;
  for (auto& v : p.out_proj.bias.data) v = 0.0;
  for (auto& v : p.ffn2.weight.data) v = 0.0;
  for (auto& v : p.ffn2.bias.data) v = 0.0;
  Rng rng(42);
  Tensor h = random_tensor({3, 8}, rng);
  Tape tape;
  Binder bind(tape);
  ForwardCtx ctx;
  Val out = transformer_block_forward(tape, bind, tape.constant(h), p, ctx);
  CHECK(tape.value(out) == h.data);
}

TEST_CASE("eval-mode block is deterministic") {
  TransformerBlockParams p = small_block(51, 8, 4, 16);
  Rng rng(52);
  Tensor h = random_tensor({4, 8}, rng);
  ForwardCtx ctx;  // train=false
  Tape ta;
  Binder ba(ta);
  const auto a = ta.value(transformer_block_forward(ta, ba, ta.constant(h), p, ctx));
  Tape tb;
  Binder bb(tb);
  const auto b = tb.value(transformer_block_forward(tb, bb, tb.constant(h), p, ctx));
  CHECK(a == b);
}

TEST_CASE("block gradients agree with finite differences") {
  const int width = 8, t_len = 3;
  TransformerBlockParams p = small_block(61, width, 2, 16);
  Rng rng(62);
  Tensor h = random_tensor({t_len, width}, rng);

  auto loss = [&](Tape& tape, Binder& bind) {
    ForwardCtx ctx;
    Val out = transformer_block_forward(tape, bind, tape.constant(h), p, ctx);
    return tape.mean_axis(tape.reshape(tape.mul(out, out), {t_len * width}), 0);
  };

  std::vector<GradCheckBlock> blocks;
  {
    Tape tape;
    Binder bind(tape);
    Val l = loss(tape, bind);
    tape.backward(l);
    auto grab = [&](const char* name, Tensor& t) {
      blocks.push_back({name, &t, tape.grad(bind.val_of(t))});
    };
    for (size_t i = 0; i < p.heads.size(); ++i) {
      grab("q.weight", p.heads[i].q.weight);
      grab("k.weight", p.heads[i].k.weight);
      grab("v.weight", p.heads[i].v.weight);
    }
    grab("out_proj.weight", p.out_proj.weight);
    grab("ffn1.weight", p.ffn1.weight);
    grab("ffn1.bias", p.ffn1.bias);
    grab("ffn2.weight", p.ffn2.weight);
    grab("ln1.gamma", p.ln1.gamma);
    grab("ln2.beta", p.ln2.beta);
  }
  auto f = [&]() {
    Tape tape;
    Binder bind(tape);
    return tape.value(loss(tape, bind))[0];
  };
  GradCheckReport rep = finite_diff_check(f, blocks, 1e-5, 1e-4);
  CHECK(rep.pass);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("mlp_forward single layer equals linear_forward") {
  Rng rng(71);
  std::vector<LinearParams> layers;
  layers.push_back(LinearParams::init(rng, 3, 5));
  Tensor x = random_tensor({2, 5}, rng);
  Tape tape;
  Binder bind(tape);
  Val a = mlp_forward(tape, bind, tape.constant(x), layers);
  Val b = linear_forward(tape, bind, tape.constant(x), layers[0]);
  CHECK(tape.value(a) == tape.value(b));
}

TEST_CASE("mlp_forward with inactive relu equals composed linears") {
  Rng rng(72);
  std::vector<LinearParams> layers;
  layers.push_back(LinearParams::zeros(4, 3));
  layers.push_back(LinearParams::init(rng, 2, 4));
  // Large positive bias keeps the hidden layer strictly positive.
  for (auto& b : layers[0].bias.data) b = 5.0;
  for (auto& w : layers[0].weight.data) w = rng.uniform() * 0.1;
  Tensor x = random_tensor({3, 3}, rng);
  Tape tape;
  Binder bind(tape);
  Val out = mlp_forward(tape, bind, tape.constant(x), layers);
  Val composed =
      linear_forward(tape, bind, linear_forward(tape, bind, tape.constant(x), layers[0]), layers[1]);
  CHECK(testsup::max_abs_diff(tape.value(out), tape.value(composed)) < 1e-12);
}

TEST_CASE("mlp_forward matches an explicit two-layer oracle") {
  Rng rng(73);
  std::vector<LinearParams> layers;
  layers.push_back(LinearParams::init(rng, 6, 4));
  layers.push_back(LinearParams::init(rng, 3, 6));
  Tensor x = random_tensor({2, 4}, rng);
  Tape tape;
  Binder bind(tape);
  Val out = mlp_forward(tape, bind, tape.constant(x), layers);

  Tensor hid({2, 6}, linear_ref(x, layers[0].weight, layers[0].bias));
  for (auto& v : hid.data) v = std::max(v, 0.0);
  const auto ref = linear_ref(hid, layers[1].weight, layers[1].bias);
  CHECK(testsup::max_abs_diff(tape.value(out), ref) < 1e-12);
}

TEST_CASE("finite inputs stay finite through a block") {
  TransformerBlockParams p = small_block(81, 8, 2, 16);
  Rng rng(82);
  Tensor h = random_tensor({5, 8}, rng, 50.0);
  Tape tape;
  Binder bind(tape);
  ForwardCtx ctx;
  Val out = transformer_block_forward(tape, bind, tape.constant(h), p, ctx);
  for (double v : tape.value(out)) CHECK(std::isfinite(v));
}
