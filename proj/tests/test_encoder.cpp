// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <cmath>
#include <vector>

#include "affectfuse/encoder.hpp"
#include "affectfuse/error.hpp"
#include "test_support.hpp"

using namespace affectfuse;
using testsup::random_tensor;

namespace {

ModalityStream stream_of(Tensor raw, Modality m = Modality::audio) {
  ModalityStream s;
  s.modality = m;
  s.present.assign(static_cast<size_t>(raw.shape[0]), 1);
  s.raw = std::move(raw);
  return s;
}

}  // namespace

TEST_CASE("apply_missing_mask keeps, zeroes, and is idempotent") {
  Rng rng(1);
  ModalityStream s = stream_of(random_tensor({4, 3}, rng));
  const std::vector<uint8_t> all(4, 1);
  ModalityStream kept = apply_missing_mask(s, all);
  CHECK(kept.raw.data == s.raw.data);
  CHECK(kept.present == s.present);

  const std::vector<uint8_t> none(4, 0);
  ModalityStream gone = apply_missing_mask(s, none);
  for (double v : gone.raw.data) CHECK(v == 0.0);
  for (uint8_t p : gone.present) CHECK(p == 0);

  const std::vector<uint8_t> mixed{1, 0, 1, 0};
  ModalityStream once = apply_missing_mask(s, mixed);
  ModalityStream twice = apply_missing_mask(once, mixed);
  CHECK(once.raw.data == twice.raw.data);
  CHECK(once.present == twice.present);
}

TEST_CASE("apply_missing_mask rejects a wrong-length mask") {
  Rng rng(2);
  ModalityStream s = stream_of(random_tensor({4, 3}, rng));
  CHECK_THROWS_AS(apply_missing_mask(s, std::vector<uint8_t>(3, 1)), DimensionError);
}

TEST_CASE("zero-depth encoder is projection plus positional row") {
  Rng rng(3);
  EncoderParams p = EncoderParams::init(rng, 5, 6, 0, 1, 12, 8, 1e-5);
  REQUIRE(p.blocks.empty());
  Tensor raw = random_tensor({3, 5}, rng);
  Tape tape;
  Binder bind(tape);
  ForwardCtx ctx;
  Val h = encode_modality(tape, bind, stream_of(raw), p, ctx);
  const auto& out = tape.value(h);
  for (int t = 0; t < 3; ++t)
    for (int c = 0; c < 6; ++c) {
      double want = p.projection.bias.data[static_cast<size_t>(c)] + p.positional.at(t, c);
      for (int i = 0; i < 5; ++i) want += p.projection.weight.at(c, i) * raw.at(t, i);
      CHECK(out[static_cast<size_t>(t) * 6 + c] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("encoder output at t ignores later raw rows") {
  Rng rng(4);
  EncoderParams p = EncoderParams::init(rng, 5, 8, 2, 2, 16, 8, 1e-5);
  Tensor raw = random_tensor({6, 5}, rng);
  Tensor raw2 = raw;
  for (int c = 0; c < 5; ++c) raw2.at(5, c) = -100.0;
  ForwardCtx ctx;
  Tape ta;
  Binder ba(ta);
  const auto a = ta.value(encode_modality(ta, ba, stream_of(raw), p, ctx));
  Tape tb;
  Binder bb(tb);
  const auto b = tb.value(encode_modality(tb, bb, stream_of(raw2), p, ctx));
  for (int t = 0; t < 5; ++t)
    for (int c = 0; c < 8; ++c)
      CHECK(a[static_cast<size_t>(t) * 8 + c] == b[static_cast<size_t>(t) * 8 + c]);
}

TEST_CASE("encoder eval pass is bit-deterministic") {
  Rng rng(5);
  EncoderParams p = EncoderParams::init(rng, 4, 8, 1, 2, 16, 4, 1e-5);
  Tensor raw = random_tensor({4, 4}, rng);
  ForwardCtx ctx;
  Tape ta;
  Binder ba(ta);
  const auto a = ta.value(encode_modality(ta, ba, stream_of(raw), p, ctx));
  Tape tb;
  Binder bb(tb);
  const auto b = tb.value(encode_modality(tb, bb, stream_of(raw), p, ctx));
  CHECK(a == b);
}

TEST_CASE("sequences beyond the positional table are a capacity error") {
  Rng rng(6);
  EncoderParams p = EncoderParams::init(rng, 4, 8, 1, 2, 16, 3, 1e-5);
  Tensor raw = random_tensor({4, 4}, rng);
  Tape tape;
  Binder bind(tape);
  ForwardCtx ctx;
  ModalityStream s = stream_of(raw);
  CHECK_THROWS_AS(encode_modality(tape, bind, s, p, ctx), CapacityError);
}

TEST_CASE("a fully missing modality still encodes to finite values") {
  Rng rng(7);
  EncoderParams p = EncoderParams::init(rng, 4, 8, 2, 2, 16, 6, 1e-5);
  ModalityStream s = stream_of(random_tensor({5, 4}, rng));
  s = apply_missing_mask(s, std::vector<uint8_t>(5, 0));
  Tape tape;
  Binder bind(tape);
  ForwardCtx ctx;
  Val h = encode_modality(tape, bind, s, p, ctx);
  for (double v : tape.value(h)) CHECK(std::isfinite(v));
}

TEST_CASE("different parameter sets produce different encodings") {
  Rng ra(8), rb(9), rx(10);
  EncoderParams pa = EncoderParams::init(ra, 4, 8, 1, 2, 16, 6, 1e-5);
  EncoderParams pb = EncoderParams::init(rb, 4, 8, 1, 2, 16, 6, 1e-5);
  ModalityStream s = stream_of(random_tensor({4, 4}, rx));
  ForwardCtx ctx;
  Tape ta;
  Binder ba(ta);
  const auto a = ta.value(encode_modality(ta, ba, s, pa, ctx));
  Tape tb;
  Binder bb(tb);
  const auto b = tb.value(encode_modality(tb, bb, s, pb, ctx));
  CHECK(a != b);
}

TEST_CASE("stream check rejects nonzero rows flagged missing") {
  Rng rng(11);
  ModalityStream s = stream_of(random_tensor({3, 2}, rng));
  s.present[1] = 0;  // raw row 1 still nonzero
  CHECK_THROWS_AS(s.check(), ContractError);
}
